import numpy as np
import pytest

from kellerpath.continuation import (
    CSV_HEADER,
    MINUS,
    PLUS,
    STEP_MAX,
    Branch,
    classify,
    detect_bifurcation,
    discrete_crossings,
    extrapolated_crossings,
    node_profile,
    onset_limit,
    trace_branch,
    trace_branches,
)
from kellerpath.discretize import RadialFV
from kellerpath.errors import TrivialProfile
from kellerpath.radial_ode import Params, Profile
from kellerpath.spectrum import cubic_integral


def test_detect_bifurcation_n2_matches_spectrum(eigs2):
    found = detect_bifurcation(Params(N=2), (1.0, 60.0))
    expected = [e.lam for e in eigs2[1:] if e.lam < 60.0]
    assert len(found) == len(expected) == 2
    assert np.allclose(found, expected, atol=1e-6)


def test_detect_bifurcation_below_second_eigenvalue_is_empty():
    assert detect_bifurcation(Params(N=3), (1.0, 20.0)) == []
    assert discrete_crossings(Params(N=3), (1.0, 20.0)) == []


def test_detect_bifurcation_validates_range():
    with pytest.raises(ValueError):
        detect_bifurcation(Params(N=3), (30.0, 20.0))


@pytest.mark.parametrize("N", [2, 3])
def test_discrete_crossings_close_to_analytic(N):
    params = Params(N=N)
    exact = detect_bifurcation(params, (1.0, 130.0), crosscheck=False)
    disc = discrete_crossings(params, (1.0, 130.0), 4001)
    assert len(disc) == len(exact)
    assert max(abs(x - y) for x, y in zip(disc, exact)) < 1e-4
    extra = extrapolated_crossings(params, (1.0, 130.0), 1001)
    assert max(abs(x - y) for x, y in zip(extra, exact)) < 1e-6


def test_onset_limit_tends_to_eigenvalue(eigs3):
    pairs, mu0 = onset_limit(Params(N=3), 2, MINUS)
    assert abs(mu0 - eigs3[1].lam) < 1e-4
    # smaller amplitude, closer to the bifurcation point
    dists = [abs(mu - eigs3[1].lam) for _, mu in pairs]
    assert dists[-1] < dists[0]


def test_branch_start_near_trivial_line(branch3_minus2, eigs3):
    first = branch3_minus2.records[0]
    assert abs(first.mu - eigs3[1].lam) == pytest.approx(0.1, abs=1e-12)
    assert first.sup_norm < 1.2


def test_transcritical_direction_n3(branch3_minus2, branch3_plus2, eigs3):
    assert cubic_integral(eigs3[1]) > 0
    lam = eigs3[1].lam
    near = [r for r in branch3_minus2.records if abs(r.mu - lam) < 2.0]
    assert near and all(r.mu > lam and r.u0 < 1.0 for r in near)
    assert branch3_plus2.records[0].mu < lam
    assert branch3_plus2.records[0].u0 > 1.0


def test_minus_branch_records(branch3_minus2):
    br = branch3_minus2
    assert br.stop_reason == "mu_max"
    assert not br.truncated
    assert br.sign_consistent()
    assert set(br.zero_counts()) == {1}
    for rec in br.records:
        assert rec.critical_points == 0
        assert rec.slope_sup <= 1.0 + 1e-6
        assert rec.morse_index == 1
        assert not rec.nonsimple_zero
    # records with mu past the fold-free region carry a finite C1 bound
    assert max(r.c1_norm for r in br.records) < 5.0


def test_zero_count_along_third_branch(branch3_minus3, eigs3):
    br = branch3_minus3
    assert br.records[-1].mu >= 2.0 * eigs3[2].lam
    assert set(br.zero_counts()) == {2}
    assert all(r.interlaced for r in br.records)
    assert all(r.critical_points == 1 for r in br.records)


def test_arclength_steps_bounded(branch3_minus2, branch3_minus3):
    for br in (branch3_minus2, branch3_minus3):
        s = np.array([r.arclength for r in br.records])
        assert np.all(np.diff(s) > 0)
        assert np.all(np.diff(s) <= STEP_MAX + 1e-15)


def test_lyapunov_every_fifth_record(branch3_minus2, branch2_minus2):
    for br in (branch3_minus2, branch2_minus2):
        checked = [r for r in br.records if r.index % 5 == 0]
        assert all(r.lyapunov_violation is not None for r in checked)
        assert max(r.lyapunov_violation for r in checked) <= 1e-10


def test_branches_do_not_intersect(branch3_minus2, branch3_minus3, branch2_minus2, branch2_minus3):
    for lo, hi in ((branch3_minus2, branch3_minus3), (branch2_minus2, branch2_minus3)):
        common = (max(lo.mus.min(), hi.mus.min()), min(lo.mus.max(), hi.mus.max()))
        za = {r.zeros_of_u_minus_1 for r in lo.records if common[0] <= r.mu <= common[1]}
        zb = {r.zeros_of_u_minus_1 for r in hi.records if common[0] <= r.mu <= common[1]}
        assert za and zb and za.isdisjoint(zb)


def test_n2_sup_norm_monitor(branch2_minus2, branch2_minus3):
    for br in (branch2_minus2, branch2_minus3):
        sup = np.array([r.sup_norm for r in br.records])
        quarter = sup[: max(1, len(sup) // 4)].max()
        assert np.all(np.isfinite(sup))
        assert sup.max() <= 10 * quarter
        assert br.sign_consistent()


def test_plus_branch_fold_is_recorded(branch3_plus2):
    br = branch3_plus2
    assert br.folds
    assert br.stop_reason in {"mu_max", "mu_min", "c1_ceiling", "max_steps", "min_step"}
    assert br.truncated == (br.stop_reason == "min_step")
    assert br.sign_consistent()


def test_profiles_keyed_and_append_only(branch3_minus2):
    br = branch3_minus2
    keys = [r.profile_ref for r in br.records]
    assert len(set(keys)) == len(keys)
    assert all(k.startswith("B2minus/") for k in keys)
    rec, prof = br.records[0], br.profiles[keys[0]]
    clone = Branch(br.i, br.sign, br.params, br.nodes, br.eigenvalue)
    clone.append(rec, prof)
    with pytest.raises(KeyError):
        clone.append(rec, prof)


def test_branch_csv(branch3_minus2, tmp_path):
    path = tmp_path / "b.csv"
    branch3_minus2.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == CSV_HEADER
    assert len(lines) == len(branch3_minus2.records) + 1
    m = branch3_minus2.manifest()
    assert m["branch"] == "B2minus" and m["records"] == len(branch3_minus2.records)


def test_concurrent_traces_match_sequential(monkeypatch):
    monkeypatch.setenv("KELLERPATH_THREADS", "2")
    params = Params(N=3)
    kw = dict(max_steps=8, nodes=1001)
    a, b = trace_branches(params, [(2, MINUS), (2, PLUS)], 60.0, **kw)
    c = trace_branch(params, 2, MINUS, 60.0, **kw)
    assert np.array_equal(a.mus, c.mus)
    assert np.array_equal(a.u0s, c.u0s)
    assert b.sign == PLUS


def test_trace_validation():
    with pytest.raises(ValueError):
        trace_branch(Params(N=3), 1, MINUS, 60.0)
    with pytest.raises(ValueError):
        trace_branch(Params(N=3), 2, "sideways", 60.0)
    with pytest.raises(ValueError):
        trace_branch(Params(N=3), 2, MINUS, 10.0, nodes=501)


def test_classify_rejects_constant():
    r = np.linspace(0.0, 1.0, 101)
    with pytest.raises(TrivialProfile):
        classify(Profile(r, np.ones_like(r), np.zeros_like(r)), 30.0, 3)


def test_classify_resamples_nonuniform_profile(branch3_minus2):
    prof = branch3_minus2.profiles[branch3_minus2.records[10].profile_ref]
    mu = branch3_minus2.records[10].mu
    grid = np.sort(np.concatenate([prof.grid[::7], [0.5004]]))
    coarse = prof.resample(grid=grid)
    rec = classify(coarse, mu, 3, nodes=4001)
    assert rec.zeros_of_u_minus_1 == 1
    assert rec.morse_index == 1


def test_node_profile_neumann_ends():
    fv = RadialFV(3, 0.0, 1.0, 101)
    u = np.cos(np.pi * fv.r)
    p = node_profile(fv, u)
    assert p.du[0] == 0.0 and p.du[-1] == 0.0

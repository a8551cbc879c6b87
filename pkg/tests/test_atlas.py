import numpy as np
import pytest

from atlasforge.atlas import (AtlasError, atlas_potts_problem, coupling_residuals, init_state,
                              run_atlas, sequential_baseline, template_potts_problem,
                              update_atlas_segmentation, update_difference)
from atlasforge.config import AtlasConfig
from atlasforge.errors import DataError
from atlasforge.grid import det2
from atlasforge.ogden import ENERGY_TERMS, total_energy
from atlasforge.potts import potts_2d
from atlasforge.synthetic import shifted_disks, t_glyph


def hand_state(cfg):
    T0 = np.array([[0.0, 1.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]])
    T1 = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    st = init_state([T0, T1], cfg)
    st.templates = np.stack([T0, T1])
    st.theta_T = np.stack([T0, T1])
    st.theta_R = np.full((3, 3), 0.5)
    st.theta_Tt = np.stack([np.full((3, 3), 0.25), np.full((3, 3), -0.25)])
    return st, T0, T1


def test_template_problem_formula():
    cfg = AtlasConfig(lambdaT=2.0, gamma1=3.0)
    st, T0, _ = hand_state(cfg)
    data, w = template_potts_problem(st, 0, cfg)
    # identity deformation: det = 1, nothing is resampled
    assert np.allclose(w, 2.0 + 1.5)
    assert np.allclose(data, (2.0 * T0 + 1.5 * (0.25 + 0.5)) / 3.5)


def test_atlas_problem_formula():
    cfg = AtlasConfig(lambdaR=1.5, gamma1=1.0)
    st, T0, T1 = hand_state(cfg)
    data, w = atlas_potts_problem(st, cfg)
    mean_T = (T0 + T1) / 2
    mean_theta = ((T0 - 0.25) + (T1 + 0.25)) / 2
    assert np.allclose(w, 2.0)
    assert np.allclose(data, (1.5 * mean_T + 0.5 * mean_theta) / 2.0)


def test_gamma1_zero_atlas_is_potts_of_mean():
    cfg = AtlasConfig(gamma1=0.0, gammaR=0.2)
    st, T0, T1 = hand_state(cfg)
    assert np.array_equal(update_atlas_segmentation(st, cfg),
                          potts_2d((T0 + T1) / 2, cfg.lambdaR, cfg.gammaR))


def test_gamma1_zero_difference_is_raw():
    cfg = AtlasConfig(gamma1=0.0)
    st, T0, _ = hand_state(cfg)
    assert np.array_equal(update_difference(st, 0, cfg), T0 - 0.5)


def test_constant_templates_give_that_constant():
    cfg = AtlasConfig(nbIter=3)
    res = run_atlas([np.full((8, 8), 0.4)] * 3, cfg)
    assert np.allclose(res.state.theta_R, 0.4 * cfg.intensity_scale)


def test_rejects_bad_inputs():
    with pytest.raises(DataError):
        run_atlas([np.zeros((8, 8))], AtlasConfig(nbIter=1))
    with pytest.raises(DataError):
        run_atlas([np.zeros((8, 8)), np.zeros((8, 9))], AtlasConfig(nbIter=1))


@pytest.fixture(scope="module")
def disk_run():
    cfg = AtlasConfig(nbIter=15, dt=0.01)
    return run_atlas(shifted_disks((32, 32), radius=6.0, shift=3.0, blur=2.0), cfg), cfg


def test_trace_has_every_term(disk_run):
    res, cfg = disk_run
    assert len(res.trace) == cfg.nbIter
    for rec in res.trace:
        assert set(ENERGY_TERMS) <= set(rec)
        assert rec["total"] == pytest.approx(sum(rec[k] for k in ENERGY_TERMS))


def test_invariants_hold_every_iteration(disk_run):
    res, cfg = disk_run
    for rec in res.trace:
        assert rec["min_det_V"] > 0
        assert rec["max_abs_V"] <= cfg.alpha
        assert rec["max_abs_W"] <= cfg.beta
    st = res.state
    assert np.all(st.U[:, :, 0] == 0) and np.all(st.U[:, :, -1] == 0)
    assert np.all(st.U[:, :, :, 0] == 0) and np.all(st.U[:, :, :, -1] == 0)


def test_energy_decreases_and_registers(disk_run):
    res, _ = disk_run
    assert res.final_energy < res.initial_energy
    # the left disk samples from further left (moves right) and vice versa
    U = res.state.U
    assert U[0, 0].min() < -1.0 and U[0, 0].max() <= 0.0
    assert U[1, 0].max() > 1.0 and U[1, 0].min() >= 0.0


def test_final_energy_matches_recomputation(disk_run):
    res, cfg = disk_run
    total, _ = total_energy(res.state, cfg)
    assert total == pytest.approx(res.final_energy)


def test_coupling_residuals_are_consistent(disk_run):
    res, _ = disk_run
    r = coupling_residuals(res.state)
    assert set(r) == {"V-grad(phi)", "W-inv(V)", "thetaTt-diff"}
    assert r["W-inv(V)"] == 0.0     # beta never binds here, so W is the exact inverse


def test_infeasible_state_scores_infinite():
    cfg = AtlasConfig()
    st = init_state(shifted_disks((16, 16), 4, 2), cfg)
    st.V[0, 0, 0, 5, 5] = -1.0
    assert total_energy(st, cfg)[0] == np.inf


def test_sub_step_failure_carries_trace(monkeypatch):
    import atlasforge.atlas as atlas_mod
    calls = {"n": 0}
    real = atlas_mod.phi_step

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] > 4:
            raise FloatingPointError("boom")
        return real(*a, **k)

    monkeypatch.setattr(atlas_mod, "phi_step", flaky)
    with pytest.raises(AtlasError) as ei:
        run_atlas(shifted_disks((16, 16), 4, 2), AtlasConfig(nbIter=5))
    assert len(ei.value.trace) == 2
    assert isinstance(ei.value.__cause__, FloatingPointError)


def test_sequential_baseline_shape():
    cfg = AtlasConfig(nbIter=3)
    res = sequential_baseline([t_glyph((24, 24), 4, 4, 4, 20, 4, 20)] * 2, cfg)
    assert res.mode == "sequential"
    assert len(res.trace) == 1
    assert np.all(det2(np.moveaxis(res.state.V, 0, 2)) > 0)

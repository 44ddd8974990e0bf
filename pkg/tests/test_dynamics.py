"""Grids, initial data, the conservative solver, and checkpointing."""

import numpy as np
import pytest

from fdlab.barenblatt import BarenblattProfile, discrete_reference
from fdlab.dynamics import (
    Grid,
    InitialDatum,
    init_state,
    line_grid,
    load_checkpoint,
    radial_grid,
    run,
    save_checkpoint,
    step,
    truncation_radius_for,
)
from fdlab.errors import NegativeDensity, NonFiniteMoment
from fdlab.exponents import ModelParams, barenblatt_constants

P1 = ModelParams(d=1, m=0.7)


def test_line_grid_geometry():
    g = line_grid(256, 50.0)
    assert g.kind == "full-line-1d"
    assert g.n == 256
    assert g.edges[0] == -50.0 and g.edges[-1] == 50.0
    assert np.allclose(g.volumes, g.widths)
    assert g.volumes.sum() == pytest.approx(100.0)
    # exact cell integrals of x and x²
    a, b = g.edges[:-1], g.edges[1:]
    assert np.allclose(g.first_moment_weights, (b ** 2 - a ** 2) / 2)
    assert np.allclose(g.second_moment_weights, (b ** 3 - a ** 3) / 3)
    assert g.face_areas.shape == (255,)
    assert np.allclose(g.face_areas, 1.0)


def test_radial_grid_geometry():
    d, L = 5, 200.0
    g = radial_grid(d, 300, L)
    assert g.kind == "radial"
    assert g.edges[0] == 0.0
    assert g.edges[-1] == pytest.approx(L)
    # volumes sum to the d-ball volume
    from scipy.special import gamma as G
    ball = np.pi ** (d / 2) / G(d / 2 + 1) * L ** d
    assert g.volumes.sum() == pytest.approx(ball, rel=1e-12)
    assert np.all(g.first_moment_weights == 0.0)
    # core is uniform, tail stretches
    w = g.widths
    assert np.allclose(w[:32], w[0])
    assert w[-1] > 10 * w[0]


def test_grid_from_edges_is_bit_exact():
    g = line_grid(128, 30.0)
    h = Grid.from_edges(g.kind, g.d, g.edges.copy())
    for name in ("edges", "centers", "widths", "volumes", "face_areas",
                 "second_moment_weights", "first_moment_weights"):
        assert np.array_equal(getattr(g, name), getattr(h, name))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid.from_edges("full-line-1d", 1, np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        Grid.from_edges("radial", 5, np.linspace(1.0, 2.0, 40))  # must start at 0
    with pytest.raises(ValueError):
        Grid.from_edges("radial", 1, np.linspace(0.0, 2.0, 40))
    with pytest.raises(ValueError):
        line_grid(64, -1.0)


def test_truncation_radius_for_covers_the_tail():
    L = truncation_radius_for(P1, sigma_max=1.3, eta=1e-10)
    prof = BarenblattProfile(P1, sigma=1.3)
    assert prof.tail_mass(L) == pytest.approx(1e-10, rel=1e-3)
    assert prof.tail_mass(0.9 * L) > 1e-10


def test_datum_constructor_validation():
    with pytest.raises(ValueError):
        InitialDatum(preset="nope")
    with pytest.raises(ValueError):
        InitialDatum.barenblatt(-1.0)
    with pytest.raises(ValueError):
        InitialDatum.generic_mix([])
    with pytest.raises(ValueError):
        InitialDatum.generic_mix([(-0.5, 1.0, 0.0)])
    with pytest.raises(ValueError):
        InitialDatum(preset="from_file")


def test_radial_data_cannot_be_shifted():
    g = radial_grid(5, 64, 100.0)
    datum = InitialDatum.shifted_barenblatt(1.0, 0.5)
    with pytest.raises(ValueError):
        datum.values(ModelParams(d=5, m=0.75), g)


def test_from_file_datum_roundtrip(tmp_path):
    g = line_grid(256, 40.0)
    x = np.linspace(-40, 40, 4001)
    u = BarenblattProfile(P1, sigma=1.0).density(x)
    path = tmp_path / "datum.npz"
    np.savez(path, x=x, u=u)
    st = init_state(P1, InitialDatum.from_file(str(path)), g, mode="matched")
    assert g.mass(st.u) == pytest.approx(1.0, abs=1e-14)
    assert st.sigma == pytest.approx(1.0, rel=1e-3)

    np.savez(path, x=x, u=-u)
    with pytest.raises(NegativeDensity):
        init_state(P1, InitialDatum.from_file(str(path)), g)

    np.savez(path, x=x, u=np.where(np.abs(x) < 1, np.inf, u))
    with pytest.raises((NonFiniteMoment, NegativeDensity)):
        init_state(P1, InitialDatum.from_file(str(path)), g)


def test_init_state_normalizes_and_recenters():
    g = line_grid(1024, 75.0)
    datum = InitialDatum.generic_mix(((0.7, 1.0, 0.0), (0.3, 1.6, 0.8)))
    st = init_state(P1, datum, g, mode="matched", recenter=True)
    assert g.mass(st.u) == pytest.approx(1.0, abs=1e-14)
    assert abs(g.first_moment(st.u)) < 1e-12
    assert st.x0 != 0.0           # the removed shift is recorded
    st2 = init_state(P1, datum, g, mode="matched", recenter=False)
    assert abs(g.first_moment(st2.u)) > 1e-3
    assert st2.x0 == 0.0


def test_init_state_exact_reference_scales():
    g = line_grid(4096, 75.0)
    st = init_state(P1, InitialDatum.barenblatt(1.0), g, mode="matched")
    assert st.sigma == pytest.approx(1.0, rel=1e-12)
    st = init_state(P1, InitialDatum.barenblatt(1.3), g, mode="matched")
    assert st.sigma == pytest.approx(1.3, rel=1e-10)
    # a balanced two-scale mixture matches at the moment average
    mix = InitialDatum.generic_mix(((0.5, 1.0, 0.0), (0.5, 3.0, 0.0)))
    st = init_state(P1, mix, g, mode="matched")
    assert st.sigma == pytest.approx(2.0, rel=1e-6)
    # dilation perturbation moves σ at first order
    st = init_state(P1, InitialDatum.dilation_perturbed(1.0, 0.05), g, mode="matched")
    assert st.sigma == pytest.approx(1.05, rel=1e-3)


def test_init_state_self_similar_keeps_unit_scale():
    g = line_grid(512, 60.0)
    st = init_state(P1, InitialDatum.barenblatt(1.4), g, mode="self_similar")
    assert st.sigma == 1.0


def test_shifted_datum_matched_scale_oracle():
    # for a shifted copy of the stationary profile, the second moment gains
    # exactly a²M, so the matched scale starts at 1 + a²M/K_M (recentring
    # removes it again)
    g = line_grid(4096, 75.0)
    a = 0.3
    K_M = barenblatt_constants(P1).K_M
    datum = InitialDatum.shifted_barenblatt(1.0, a)
    st = init_state(P1, datum, g, mode="matched", recenter=False)
    assert st.sigma == pytest.approx(1.0 + a * a / K_M, rel=1e-5)
    st_c = init_state(P1, datum, g, mode="matched", recenter=True)
    assert st_c.sigma == pytest.approx(1.0, rel=1e-9)
    assert st_c.x0 == pytest.approx(a, abs=1e-12)


def test_declared_bounds_are_verified():
    g = line_grid(512, 60.0)
    datum = InitialDatum(preset="generic_mix",
                         components=((0.7, 1.0, 0.0), (0.3, 1.6, 0.8)),
                         bounds=(1.0, 1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        init_state(P1, datum, g)
    ok = InitialDatum(preset="barenblatt", sigma0=1.0,
                      bounds=(0.99, 1.0, 1.01, 1.0))
    init_state(P1, ok, g)      # holds pointwise, no complaint


def test_fixed_point_run_is_pinned():
    g = line_grid(512, 60.0)
    res = run(P1, InitialDatum.barenblatt(1.0), g, mode="matched", t_end=0.2)
    assert max(rep.F for _, rep in res.snapshots) < 1e-10
    assert max(abs(s.sigma - 1.0) for s, _ in res.snapshots) < 1e-10
    assert res.mass_drift < 1e-14


def test_conservation_and_monotonicity_small_run():
    g = line_grid(512, 60.0)
    datum = InitialDatum.generic_mix(((0.7, 1.0, 0.0), (0.3, 1.6, 0.8)))
    res = run(P1, datum, g, mode="matched", t_end=0.5)
    assert res.mass_drift < 1e-12
    assert res.F_increase_max <= 0.0
    # Newton tail noise in the matched scale grows on coarse grids (the x²
    # weights amplify per-cell solver residuals); 1e−5 bounds it at 512 cells
    assert res.sigma_increase_max < 1e-5
    F = res.F
    assert np.all(np.diff(F) <= 1e-16)
    assert res.rejected_steps >= 0
    assert res.final_state.t == pytest.approx(0.5, abs=1e-12)


def test_self_similar_time_rescaling_telescopes():
    # with σ frozen at 1, the original-time increments integrate exactly to
    # τ(t) = (e^{2θt} − 1)/(2θ)
    g = line_grid(512, 60.0)
    datum = InitialDatum.generic_mix(((0.7, 1.0, 0.0), (0.3, 1.6, 0.8)))
    res = run(P1, datum, g, mode="self_similar", t_end=0.5)
    theta = P1.theta
    st = res.final_state
    assert st.sigma == 1.0
    assert st.R == pytest.approx(np.exp(2 * st.t), rel=1e-14)
    assert st.tau == pytest.approx((np.exp(2 * theta * st.t) - 1) / (2 * theta),
                                   rel=1e-11)


def test_step_advances_and_preserves_mass():
    g = line_grid(256, 50.0)
    st = init_state(P1, InitialDatum.barenblatt(1.2), g, mode="matched")
    m0 = g.mass(st.u)
    new = step(st, 1e-3)
    assert new.t == pytest.approx(st.t + 1e-3)
    assert g.mass(new.u) == pytest.approx(m0, rel=1e-14)
    assert (new.u > 0).all()
    with pytest.raises(ValueError):
        step(st, -0.1)


def test_checkpoint_roundtrip_is_bit_exact(tmp_path):
    g = line_grid(512, 60.0)
    datum = InitialDatum.generic_mix(((0.7, 1.0, 0.0), (0.3, 1.6, 0.8)))
    res = run(P1, datum, g, mode="matched", t_end=0.1, snapshot_dt=0.05)
    state = res.final_state
    p1 = tmp_path / "a.npz"
    p2 = tmp_path / "b.npz"
    save_checkpoint(state, p1)
    loaded = load_checkpoint(p1)
    assert np.array_equal(loaded.u, state.u)
    assert np.array_equal(loaded.grid.edges, state.grid.edges)
    assert (loaded.t, loaded.sigma, loaded.tau, loaded.x0) == \
        (state.t, state.sigma, state.tau, state.x0)
    assert loaded.dt_next == state.dt_next
    assert loaded.mode == state.mode and loaded.params == state.params
    save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_resume_matches_uninterrupted_run(tmp_path):
    g = line_grid(512, 60.0)
    datum = InitialDatum.generic_mix(((0.7, 1.0, 0.0), (0.3, 1.6, 0.8)))
    full = run(P1, datum, g, mode="matched", t_end=0.3, snapshot_dt=0.05)
    half = run(P1, datum, g, mode="matched", t_end=0.15, snapshot_dt=0.05)
    ck = tmp_path / "half.npz"
    save_checkpoint(half.final_state, ck)
    resumed = run(P1, datum, g, mode="matched", t_end=0.3, snapshot_dt=0.05,
                  initial_state=load_checkpoint(ck))
    assert np.array_equal(resumed.final_state.u, full.final_state.u)
    assert resumed.final_state.t == full.final_state.t
    assert resumed.final_state.sigma == full.final_state.sigma
    assert resumed.final_state.tau == full.final_state.tau


def test_bad_checkpoint_version_rejected(tmp_path):
    g = line_grid(128, 30.0)
    st = init_state(P1, InitialDatum.barenblatt(1.0), g)
    path = tmp_path / "ck.npz"
    save_checkpoint(st, path)
    with np.load(path) as z:
        data = {k: z[k] for k in z.files}
    data["version"] = np.int64(99)
    np.savez(path, **data)
    with pytest.raises(ValueError):
        load_checkpoint(path)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import jensenshannon
from scipy.stats import entropy as scipy_entropy

from conftest import line_map, star_map
from toptrack.belief import (
    BeliefFilter,
    FilterConfig,
    FilterError,
    entropy,
    jsd,
    jump_rate,
    resample_indices,
    velocity_agreement,
)
from toptrack.sensors import Observation, SensorKind, gps_to_observation


def point_mass(n, node, kind=SensorKind.RFID, t=0.0, identifying=True, floor=0.0):
    lik = np.full(n, floor)
    lik[node] = 1.0
    return Observation(lik, identifying, kind, t, target_id=0 if identifying else None)


def uniform_obs(n, t=0.0):
    return Observation(np.ones(n), False, SensorKind.LIDAR, t)


def make_filter(tmap, **cfg):
    return BeliefFilter(tmap, FilterConfig(**{"seed": 0, **cfg}))


def place(f, q, v, tau=0.0, t=0.0):
    """Put every particle on node q with velocity v."""
    n = f.particle_count
    f.q = np.full(n, q, dtype=np.int64)
    f.v = np.tile(np.asarray(v, dtype=float), (n, 1))
    f.tau = np.full(n, float(tau))
    f.ts = t
    f.initialized = True


def distributions(n):
    # Exact zeros or ordinary values; subnormals make the scipy oracle return inf.
    entry = st.one_of(st.just(0.0), st.floats(1e-6, 1))
    return st.lists(entry, min_size=n, max_size=n).filter(lambda x: sum(x) > 1e-6).map(
        lambda x: np.asarray(x) / np.sum(x)
    )


# -- jump rate ----------------------------------------------------------------------


def test_lambda_example():
    lam = jump_rate(1.0, 0.5)
    assert lam == pytest.approx(2 * math.log(0.5) * 0.5)
    assert lam == pytest.approx(-0.6931, abs=1e-4)
    assert math.exp(lam * 1.0) == pytest.approx(0.5, abs=1e-15)


def test_lambda_zero_for_receding_velocity():
    assert jump_rate(2.0, -1.0) == 0.0


# -- initialisation ------------------------------------------------------------------


def test_point_mass_initialisation(rmap):
    f = make_filter(rmap)
    f.initialize(point_mass(rmap.num_nodes, 7))
    assert np.all(f.q == 7)
    assert np.all((f.tau >= 0) & (f.tau <= 1))


def test_non_identifying_initialisation_is_uniform(rmap):
    n = 100_000
    f = make_filter(rmap, particle_count=n)
    # Likelihood peaked on node 3 is ignored because LIDAR does not identify.
    f.initialize(point_mass(rmap.num_nodes, 3, SensorKind.LIDAR, identifying=False, floor=1e-9))
    counts = np.bincount(f.q, minlength=rmap.num_nodes)
    p = 1 / rmap.num_nodes
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 4.5 * sigma)  # 137 bins, Bonferroni-ish margin
    assert abs(f.v.var() - 5e-2) < 3 * 5e-2 * math.sqrt(2 / (2 * n))
    assert abs(f.v.mean()) < 3 * math.sqrt(5e-2 / (2 * n))


def test_uninitialised_predict_raises(rmap):
    with pytest.raises(FilterError):
        make_filter(rmap).predict(1.0)


# -- prediction ------------------------------------------------------------------------


def brute_force_transition(tmap, q, v, tau, rule):
    """Jump probability and destination distribution by looping over neighbours."""
    nbrs = sorted(tmap.neighbors(q))
    b, lam = [], []
    for k in nbrs:
        unit, d = tmap.edge_vector(q, k)
        proj = float(unit @ v)
        b.append(max(0.0, proj))
        lam.append(2 * math.log(0.5) * max(0.0, proj) / d)
    sb = sum(b)
    p_jump = sum(bk * -math.expm1(lk * tau) for bk, lk in zip(b, lam)) / sb if sb > 0 else 0.0
    if rule == "mixture":
        raw = [bk * -math.expm1(lk * tau) for bk, lk in zip(b, lam)]
    else:
        raw = [math.exp(-lk * tau) for lk in lam]
    tot = sum(raw)
    dest = {k: (r / tot if tot > 0 else 0.0) for k, r in zip(nbrs, raw)}
    return p_jump, dest


@pytest.mark.parametrize("rule", ["mixture", "softmax"])
@settings(max_examples=150, deadline=None)
@given(
    k=st.integers(1, 5),
    vx=st.floats(-2, 2),
    vy=st.floats(-2, 2),
    tau=st.floats(0, 20),
)
def test_transition_matches_brute_force(rule, k, vx, vy, tau):
    tmap = star_map(k)
    f = make_filter(tmap, destination_rule=rule, particle_count=1)
    p, dest = f.transition_probabilities(np.array([0]), np.array([[vx, vy]]), np.array([tau]))
    p_ref, dest_ref = brute_force_transition(tmap, 0, np.array([vx, vy]), tau, rule)
    assert p[0] == pytest.approx(p_ref, abs=1e-12)
    got = {int(tmap.neighbor_table[0, s]): dest[0, s] for s in range(k)}
    for node, prob in dest_ref.items():
        assert got[node] == pytest.approx(prob, abs=1e-12)
    if p[0] > 0:
        assert sum(got.values()) == pytest.approx(1.0, abs=1e-12)


def test_corridor_destination_follows_velocity():
    tmap = line_map(3, 3.0)
    f = make_filter(tmap, particle_count=1)
    p, dest = f.transition_probabilities(np.array([1]), np.array([[0.8, 0.0]]), np.array([30.0]))
    slot_fwd = list(tmap.neighbor_table[1]).index(2)
    assert dest[0, slot_fwd] == pytest.approx(1.0)
    # b-weighted mixture with one active edge: 1 - exp(lambda tau)
    assert p[0] == pytest.approx(1 - math.exp(jump_rate(3.0, 0.8) * 30.0))


def test_velocity_pointing_away_never_jumps():
    tmap = line_map(2, 1.0)
    f = make_filter(tmap, particle_count=500)
    place(f, 0, (-1.0, 0.0))
    for t in range(1, 20):
        f.predict(float(t))
    assert np.all(f.q == 0)
    assert np.allclose(f.tau, 19.0)


def test_zero_dt_predict_is_a_no_op(rmap):
    f = make_filter(rmap)
    place(f, 5, (1.0, 0.0), tau=0.3, t=2.0)
    jumped = f.predict(2.0)
    assert not jumped.any() and np.allclose(f.tau, 0.3)


def test_time_going_backwards_raises(rmap):
    f = make_filter(rmap)
    place(f, 5, (1.0, 0.0), t=2.0)
    with pytest.raises(FilterError):
        f.predict(1.0)


def test_predict_only_advances_along_lane():
    spacing = 10 / 3
    tmap = line_map(10, spacing)
    n = 20_000
    f = make_filter(tmap, particle_count=n)
    place(f, 3, (1.0, 0.0))
    est = f.predict_only(4.0)
    # One predict per 4 s: jump chance is 1 - exp(lambda * 4) with lambda for 1 m/s.
    p = 1 - math.exp(jump_rate(spacing, 1.0) * 4.0)
    frac = np.mean(f.q == 4)
    assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / n)
    assert set(np.unique(f.q)) <= {3, 4}
    assert est == 4
    assert np.all(f.tau[f.q == 4] == 0) and np.allclose(f.tau[f.q == 3], 4.0)


def test_predict_only_stationary_keeps_estimate(rmap):
    f = make_filter(rmap)
    place(f, 20, (0.0, 0.0))
    for t in (4.0, 8.0, 12.0):
        assert f.predict_only(t) == 20


def test_velocity_nudged_towards_edge_velocity():
    tmap = line_map(3, 2.0)
    f = make_filter(tmap, particle_count=2000)
    place(f, 1, (0.5, 0.3))
    f.predict(10.0)
    moved = f.q == 2
    assert moved.any()
    # Sample velocity is (2 m / 10 s, 0) = (0.2, 0); gain is Pr(jump) * Pr(dest) / V.
    p, dest = f.transition_probabilities(np.array([1]), np.array([[0.5, 0.3]]), np.array([10.0]))
    slot = list(tmap.neighbor_table[1]).index(2)
    gain = p[0] * dest[0, slot] / 10
    expected = np.array([0.5, 0.3]) + gain * (np.array([0.2, 0.0]) - np.array([0.5, 0.3]))
    np.testing.assert_allclose(f.v[moved], np.tile(expected, (moved.sum(), 1)))
    np.testing.assert_allclose(f.v[~moved], np.tile([0.5, 0.3], ((~moved).sum(), 1)))


def test_constant_speed_ignores_direction():
    tmap = line_map(3, 2.0)
    f = make_filter(tmap, motion_model="constant_speed", constant_speed=0.5, particle_count=1)
    p, dest = f.transition_probabilities(np.array([1]), np.array([[-9.0, 0.0]]), np.array([2.0]))
    assert p[0] == pytest.approx(1 - math.exp(jump_rate(2.0, 0.5) * 2.0))
    np.testing.assert_allclose(dest[0, :2], [0.5, 0.5])


def test_fixed_rate_hazard():
    tmap = line_map(3, 2.0)
    f = make_filter(tmap, motion_model="fixed_rate", particle_count=1)
    p, _ = f.transition_probabilities(np.array([1]), np.array([[0.0, 0.0]]), np.array([5.0]))
    assert p[0] == pytest.approx(1 - math.exp(-0.1 * 5.0))


# -- weighting ----------------------------------------------------------------------------


def test_gamma_v_zero_sensors_weight_by_likelihood_only(rmap):
    f = make_filter(rmap)
    f.initialize(uniform_obs(rmap.num_nodes))
    lik = np.random.default_rng(1).random(rmap.num_nodes)
    for kind, gq in ((SensorKind.LIDAR, 0.25), (SensorKind.RFID, 1.0)):
        obs = Observation(lik, kind is SensorKind.RFID, kind, 0.0, 0 if kind is SensorKind.RFID else None,
                          velocity_estimate=np.array([1.0, 0.0]))
        w, _, _ = f.weight(obs)
        np.testing.assert_allclose(w, gq * lik[f.q])


def test_velocity_weight_at_the_mode():
    v_s = np.array([0.6, 0.8])  # speed 1
    sigma = 0.5
    g_max = 1 / (sigma * math.sqrt(2 * math.pi))
    w = velocity_agreement(v_s[None, :], v_s)
    assert w[0] == pytest.approx((g_max + 1) / 4, abs=1e-12)


def test_velocity_weight_sigma_floor():
    w = velocity_agreement(np.zeros((1, 2)), np.zeros(2), sigma_min=0.05)
    assert np.isfinite(w).all()
    g = 1 / (0.05 * math.sqrt(2 * math.pi))
    assert w[0] == pytest.approx(0.25 * (g + 0.5))


def test_mass_is_linear_in_likelihood():
    tmap = line_map(3)
    f = make_filter(tmap, particle_count=2)
    f.q = np.array([0, 2])
    f.v = np.zeros((2, 2))
    f.tau = np.zeros(2)
    f.initialized = True
    obs = Observation(np.array([0.8, 0.0, 0.2]), False, SensorKind.LIDAR, 0.0)
    w, est, _ = f.weight(obs)
    assert w[0] / w[1] == pytest.approx(4.0)
    assert est == 0


def test_degenerate_weights_fall_back_to_uniform():
    tmap = line_map(5)
    f = make_filter(tmap, particle_count=50)
    place(f, 0, (0.0, 0.0))
    obs = point_mass(5, 4, SensorKind.LIDAR, identifying=False)
    w, _, degenerate = f.weight(obs)
    assert degenerate and np.all(w == 1.0)
    _, diag = f.update(Observation(obs.likelihood, False, SensorKind.LIDAR, 1.0))
    assert diag.degenerate_weights
    assert f.particle_count == 50


# -- resampling ---------------------------------------------------------------------------


def test_resample_without_teleport_keeps_support(rmap):
    f = make_filter(rmap)
    f.initialize(uniform_obs(rmap.num_nodes))
    before = set(f.q.tolist())
    f.pr_jump = 0.0
    f.resample(np.random.default_rng(0).random(f.particle_count))
    assert set(f.q.tolist()) <= before
    assert np.all(f.tau >= 0)


def test_concentrated_weight_copies_one_particle(rmap):
    f = make_filter(rmap)
    f.initialize(uniform_obs(rmap.num_nodes))
    w = np.zeros(f.particle_count)
    w[17] = 1.0
    node = f.q[17]
    f.pr_jump = 0.0
    f.resample(w)
    assert np.all(f.q == node)


def test_teleport_rate(rmap):
    n = 100_000
    f = make_filter(rmap, particle_count=n)
    place(f, 0, (0.0, 0.0))
    f.pr_jump = 1e-3
    f.resample(np.ones(n))
    moved = int(np.sum(f.q != 0))
    # A teleport landing back on node 0 is invisible.
    p = 1e-3 * (rmap.num_nodes - 1) / rmap.num_nodes
    assert abs(moved - n * p) < 3 * math.sqrt(n * p * (1 - p))


def test_resample_rejects_bad_weights(rmap):
    f = make_filter(rmap)
    f.initialize(uniform_obs(rmap.num_nodes))
    with pytest.raises(FilterError):
        f.resample(np.zeros(f.particle_count))
    with pytest.raises(FilterError):
        f.resample(-np.ones(f.particle_count))


@pytest.mark.parametrize("method", ["multinomial", "systematic"])
def test_resample_indices_follow_weights(method):
    rng = np.random.default_rng(3)
    w = np.array([0.1, 0.0, 0.6, 0.3])
    idx = resample_indices(w, rng, method, size=100_000)
    freq = np.bincount(idx, minlength=4) / 100_000
    assert freq[1] == 0
    np.testing.assert_allclose(freq, w, atol=0.01)


# -- divergence and entropy ----------------------------------------------------------------


def test_jsd_examples():
    assert jsd([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert jsd([1, 0, 0], [0, 0, 1]) == pytest.approx(1.0)
    # Hand evaluation: M = (0.75, 0.25)
    kl_q = 0.5 * math.log2(0.5 / 0.75) + 0.5 * math.log2(0.5 / 0.25)
    kl_l = 1.0 * math.log2(1 / 0.75)
    assert jsd([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.sqrt(0.5 * (kl_q + kl_l)), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(distributions(6), distributions(6))
def test_jsd_matches_scipy_and_is_bounded(p, q):
    d = jsd(p, q)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(jsd(q, p), abs=1e-12)
    assert d == pytest.approx(float(jensenshannon(p, q, base=2)), abs=1e-7)


def test_entropy_examples():
    assert entropy([0, 1, 0, 0]) == 0.0
    assert entropy(np.full(137, 1 / 137)) == pytest.approx(1.0)
    assert entropy([0.5, 0.5, 0, 0]) == pytest.approx(0.5)


@settings(max_examples=300, deadline=None)
@given(distributions(8))
def test_entropy_matches_scipy(p):
    h = entropy(p)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(scipy_entropy(p, base=2) / 3.0, abs=1e-12)


# -- update cycle --------------------------------------------------------------------------


def test_reinitialises_on_divergent_identifying_obs(rmap):
    f = make_filter(rmap)
    f.initialize(point_mass(rmap.num_nodes, 3))
    far = int(np.argmax(rmap.hops[3]))
    _, diag = f.update(point_mass(rmap.num_nodes, far, t=1.0))
    assert diag.jsd == pytest.approx(1.0) and diag.reinitialized
    assert np.all(f.q == far)
    # Re-initialisation sets 1e-3, then the collapsed belief switches it off again.
    assert diag.entropy < 0.6 and f.pr_jump == 0.0


def test_divergent_non_identifying_obs_does_not_reinitialise(rmap):
    f = make_filter(rmap)
    f.initialize(point_mass(rmap.num_nodes, 3))
    far = int(np.argmax(rmap.hops[3]))
    _, diag = f.update(point_mass(rmap.num_nodes, far, SensorKind.LIDAR, t=1.0, identifying=False))
    assert diag.jsd > 0.975 and not diag.reinitialized
    assert f.pr_jump == 0.0


def test_monitor_off_never_reinitialises(rmap):
    f = make_filter(rmap, monitor=False, pr_jump_initial=1e-3)
    f.initialize(point_mass(rmap.num_nodes, 3))
    _, diag = f.update(point_mass(rmap.num_nodes, 100, t=1.0))
    assert not diag.reinitialized and f.pr_jump == 1e-3


@pytest.mark.parametrize("seed", range(8))
def test_repeated_fixes_converge_quickly(rmap, seed):
    # Regression bound: one update sufficed for every seed when first measured.
    f = BeliefFilter(rmap, FilterConfig(seed=seed))
    f.initialize(uniform_obs(rmap.num_nodes))
    for k in range(1, 4):
        _, diag = f.update(gps_to_observation(rmap, rmap.coords[60], 0, float(k)))
        if diag.entropy < 0.6:
            break
    assert diag.entropy < 0.6
    assert f.pr_jump == 0.0


def test_diagnostics_top_mass(rmap):
    f = make_filter(rmap)
    _, diag = f.update(gps_to_observation(rmap, rmap.coords[60], 0, 0.0))
    top = diag.top_mass(3)
    assert top[0][0] == diag.estimate
    assert top[0][1] >= top[1][1] >= top[2][1]

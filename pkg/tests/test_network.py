import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_opt.dp_dispatch import InfeasibleError
from microgrid_opt.network import (
    Layout,
    NetworkData,
    NumericalBreakdown,
    ValueFunctionApprox,
    adp_train,
    apply_exogenous,
    check_feasible,
    control_levels,
    exact_dp,
    exchange_power,
    features,
    greedy_action,
    grid_power,
    initial_state,
    myopic_baseline,
    post_decision,
    rls_update,
    simulate_policy,
    step_cost,
    table_network,
    transition,
)
from microgrid_opt.oracles import batch_least_squares, brute_force_network

CFG = table_network()


def _k1(rng=None):
    """Single-microgrid network; randomized start when ``rng`` is given."""
    mg = CFG.microgrids[0]
    if rng is None:
        return dataclasses.replace(CFG, microgrids=(mg,), levels=3)
    mg = dataclasses.replace(mg, e0=float(rng.uniform(50, 150)), pg0=float(rng.choice([20, 30, 40, 50])),
                             pcl0=float(rng.choice([0, 15, 30])))
    return dataclasses.replace(CFG, microgrids=(mg,), levels=3, cems_e0=float(rng.uniform(100, 340)))


def _k1_data(rng, n=3):
    return NetworkData(rng.uniform(0, 100, (1, n)), rng.uniform(50, 300, (1, n)), rng.uniform(0.02, 0.3, n))


def _k3_data(rng, n=12):
    t = np.arange(n)
    res = np.array([60 + 40 * np.sin(2 * np.pi * t / n + k) + rng.normal(0, 5, n) for k in range(3)]).clip(0)
    load = np.array([m + 30 * np.cos(2 * np.pi * t / n + k) + rng.normal(0, 5, n) for k, m in enumerate((200, 160, 240))])
    price = 0.1 + 0.06 * np.sin(2 * np.pi * t / n) + rng.normal(0, 0.005, n)
    return NetworkData(res, load, price)


@pytest.mark.parametrize("K", range(1, 11))
def test_dimensions(K):
    lay = Layout(K)
    assert (lay.n_state, lay.n_control, lay.n_exog, lay.n_features) == (5 * K + 3, 3 * K + 2, 2 * K + 1, 13 * K + 8)
    mg = CFG.microgrids[0]
    cfg = dataclasses.replace(CFG, microgrids=(mg,) * K)
    rng = np.random.default_rng(K)
    data = NetworkData(rng.uniform(0, 50, (K, 3)), rng.uniform(100, 200, (K, 3)), rng.uniform(0.05, 0.2, 3))
    s = initial_state(cfg, data)
    assert s.shape == (lay.n_state,)
    assert data.exogenous(1).shape == (lay.n_exog,)
    assert features(s, cfg).shape == (lay.n_features,)
    u, _, _ = greedy_action(s, None, 0, cfg)
    assert u.shape == (lay.n_control,)


def _state(cfg, ep=0.0, mgs=(), cems=(0.0, 0.0)):
    lay = cfg.layout
    s = np.zeros(lay.n_state)
    s[lay.EP] = ep
    for i, vals in enumerate(mgs):
        s[list(lay.mg(i))] = vals
    s[list(lay.cems())] = cems
    return s


def test_exchange_power_examples():
    cfg = _k1()
    u = np.zeros(5)
    assert exchange_power(1, _state(cfg, mgs=[(0, 0, 0, 120, 120)]), u, cfg) == 0
    s = _state(cfg, mgs=[(100, 100, 20, 150, 300)])
    u[1] = 10
    assert exchange_power(1, s, u, cfg) == pytest.approx(20)
    assert exchange_power(1, _state(cfg, mgs=[(100, 0, 0, 200, 80)]), np.zeros(5), cfg) < 0
    with pytest.raises(IndexError):
        exchange_power(2, s, u, cfg)


def test_grid_power_examples():
    assert grid_power(_state(CFG), np.zeros(11), CFG) == 0
    # exchanges 200 + 150 + 150 = 500, CEMS DG 100 and discharge 50
    s = _state(CFG, mgs=[(0, 0, 0, 0, 200), (0, 0, 0, 0, 150), (0, 0, 0, 0, 150)], cems=(200, 100))
    u = np.zeros(11)
    u[-1] = 50
    assert grid_power(s, u, CFG) == pytest.approx(350)
    s = _state(CFG, mgs=[(0, 0, 0, 100, 0)] * 3, cems=(200, 100))
    assert grid_power(s, np.zeros(11), CFG) < 0


def test_balance_residual_is_zero():
    rng = np.random.default_rng(5)
    data = _k3_data(rng)
    s = initial_state(CFG, data)
    for t in range(6):
        u, _, post = greedy_action(s, None, t, CFG, rng=rng, explore=0.5)
        lay = CFG.layout
        total_exc = sum(exchange_power(i, s, u, CFG) for i in range(1, 4))
        supply = grid_power(s, u, CFG) + s[lay.cems()[1]] + u[lay.cems_u()[1]]
        assert supply - total_exc == pytest.approx(0, abs=1e-9)
        s = apply_exogenous(post, data.exogenous(t + 1), CFG)


def test_step_cost_constant_terms_at_zero_price():
    cfg = _k1()
    mg = cfg.microgrids[0]
    s = _state(cfg, mgs=[(90, mg.dg.p_min, mg.cl.p_min, 40, 150)], cems=(200, cfg.cems_dg.p_min))
    expect = (mg.dg.b_g + cfg.cems_dg.b_g + mg.cl.a_cl + mg.cl.b_cl * mg.cl.p_min
              + mg.bess.gamma2 * 90 + cfg.cems_bess.gamma2 * 200
              + mg.dg.a_g * mg.dg.p_min + cfg.cems_dg.a_g * cfg.cems_dg.p_min)
    assert step_cost(s, np.zeros(5), cfg) == pytest.approx(expect, rel=1e-12)


def test_step_cost_hand_case():
    cfg = _k1()
    s = _state(cfg, ep=0.1, mgs=[(100, 30, 10, 50, 200)], cems=(240, 300))
    u = np.array([10.0, 20.0, 5.0, 0.0, -30.0])
    mg_opr = 0.08 * 20 / 12 + 0.08 * 100 + (0.3 * 30 + 0.05) + (0.33 + 0.05 * 10)
    cems_opr = 0.08 * 30 / 12 + 0.08 * 240 + (0.31 * 300 + 0.06)
    exchange = 200 - 10 - 50 - 30 - 20
    # the bill counts the exchange twice: once as load and once through the grid import
    elec = 0.1 * (2 * exchange - 300 - (-30))
    assert step_cost(s, u, cfg) == pytest.approx(mg_opr + cems_opr + elec, rel=1e-12)
    assert step_cost(s, u, cfg) == pytest.approx(121.473333333, rel=1e-9)


def test_doubling_price_doubles_bill_only():
    cfg = _k1()
    s = _state(cfg, ep=0.1, mgs=[(100, 30, 10, 50, 200)], cems=(240, 300))
    u = np.array([10.0, 20.0, 5.0, 0.0, -30.0])
    opr = step_cost(_state(cfg, ep=0.0, mgs=[(100, 30, 10, 50, 200)], cems=(240, 300)), u, cfg)
    s2 = s.copy()
    s2[0] = 0.2
    assert step_cost(s2, u, cfg) - opr == pytest.approx(2 * (step_cost(s, u, cfg) - opr), rel=1e-12)


def test_transition_examples():
    rng = np.random.default_rng(0)
    data = _k3_data(rng)
    s = initial_state(CFG, data)
    u0 = np.zeros(11)
    assert np.array_equal(transition(s, u0, np.zeros(7), CFG), s)
    u, _, _ = greedy_action(s, None, 0, CFG)
    assert np.array_equal(transition(s, u, np.zeros(7), CFG), post_decision(s, u, CFG))
    u = u0.copy()
    u[1] = 100.0
    after = transition(s, u, np.zeros(7), CFG)
    e = CFG.layout.mg(0)[0]
    assert s[e] - after[e] == pytest.approx(100 / 12 * 1.05, rel=1e-12)
    w = data.exogenous(1)
    nxt = transition(s, u0, w, CFG)
    assert nxt[CFG.layout.EP] == pytest.approx(data.price[1])
    np.testing.assert_allclose(nxt[CFG.layout.exogenous[::2]], data.res[:, 1])


def test_transition_rejects_out_of_box_control():
    s = initial_state(CFG, _k3_data(np.random.default_rng(0)))
    u = np.zeros(11)
    u[0] = 1000.0
    with pytest.raises(InfeasibleError, match="DG ramp"):
        transition(s, u, np.zeros(7), CFG)
    u[0] = 0.0
    u[1] = 149.0  # allowed rate, but drains below the energy floor
    s[CFG.layout.mg(0)[0]] = CFG.microgrids[0].bess.e_min + 1
    with pytest.raises(InfeasibleError, match="BESS energy"):
        check_feasible(s, u, CFG)


def _groups(K):
    lay = Layout(K)
    sizes = [lay.n_state, 3 * K + 2, 3 * K + 2, 2 * K, 1]
    return np.split(np.arange(lay.n_features), np.cumsum(sizes)[:-1])


def test_features_examples():
    assert features(np.zeros(18), CFG).shape == (47,)
    phi = features(np.zeros(18), CFG)
    assert phi[-1] == 1 and np.all(phi[:-1] == 0)
    rng = np.random.default_rng(1)
    s = initial_state(CFG, _k3_data(rng))
    s2 = s.copy()
    s2[0] *= 3.0
    a, b = features(s, CFG), features(s2, CFG)
    g1, g2, g3, g4, g5 = _groups(3)
    np.testing.assert_allclose(b[g3], 3 * a[g3], rtol=1e-12)
    np.testing.assert_allclose(b[g4], 3 * a[g4], rtol=1e-12)
    assert np.array_equal(b[g1[1:]], a[g1[1:]])
    assert np.array_equal(b[g2], a[g2]) and np.array_equal(b[g5], a[g5])
    # a stack of states gives one feature row each
    assert np.array_equal(features(np.stack([s, s2]), CFG), np.stack([a, b]))


def test_rls_zero_innovation_keeps_theta():
    rng = np.random.default_rng(0)
    vfa = ValueFunctionApprox.zeros(2, 6)
    vfa.theta[1] = rng.normal(size=6)
    before = vfa.theta.copy()
    phi = rng.normal(size=6)
    rls_update(vfa, phi, float(vfa.theta[1] @ phi), 1)
    np.testing.assert_array_equal(vfa.theta, before)


def test_rls_matches_batch_least_squares():
    rng = np.random.default_rng(2)
    F, n = 8, 100
    X = rng.normal(size=(n, F))
    y = X @ rng.normal(size=F) + rng.normal(0, 0.3, n)
    vfa = ValueFunctionApprox.zeros(1, F, b0=1e8)
    for phi, v in zip(X, y):
        rls_update(vfa, phi, v, 0)
    assert np.max(np.abs(vfa.theta[0] - batch_least_squares(X, y))) <= 1e-6


def test_rls_keeps_b_symmetric():
    rng = np.random.default_rng(3)
    cfg = CFG
    vfa = ValueFunctionApprox.zeros(1, cfg.layout.n_features)
    data = _k3_data(rng)
    s = initial_state(cfg, data)
    for _ in range(10_000):
        phi = features(s + rng.normal(0, 5, s.shape), cfg)
        rls_update(vfa, phi, float(rng.normal(1000, 50)), 0)
    B = vfa.B[0]
    assert np.max(np.abs(B - B.T)) <= 1e-10


def test_rls_breakdown_is_reported():
    vfa = ValueFunctionApprox.zeros(1, 3)
    vfa.B[0] = -np.eye(3)
    with pytest.raises(NumericalBreakdown):
        rls_update(vfa, np.ones(3), 1.0, 0)


def test_control_levels_prefer_idle():
    v = control_levels(-20, 20, 5)
    assert list(v) == [0, 10, -10, 20, -20]
    assert list(control_levels(-10, 10, 2)) == [0, 10, -10]


@pytest.mark.parametrize("seed", range(6))
def test_greedy_equals_joint_enumeration(seed):
    rng = np.random.default_rng(seed)
    cfg = _k1(rng)
    data = _k1_data(rng)
    s = initial_state(cfg, data)
    vfa = ValueFunctionApprox.zeros(1, cfg.layout.n_features)
    vfa.theta[0] = rng.normal(0, 30, cfg.layout.n_features)
    u, v_hat, post = greedy_action(s, vfa, 0, cfg)
    best = np.inf
    mg = cfg.microgrids[0]
    units = (mg.dg, mg.bess, mg.cl, cfg.cems_dg, cfg.cems_bess)
    boxes = [control_levels(x.u_min, x.u_max, cfg.levels) for x in units]
    for cand in itertools.product(*boxes):
        cand = np.array(cand)
        try:
            check_feasible(s, cand, cfg)
        except InfeasibleError:
            continue
        best = min(best, step_cost(s, cand, cfg) + float(vfa.value(0, features(post_decision(s, cand, cfg), cfg))))
    assert v_hat == pytest.approx(best, rel=1e-9, abs=1e-9)
    assert step_cost(s, u, cfg) + float(vfa.value(0, features(post, cfg))) == pytest.approx(best, rel=1e-9, abs=1e-9)


def test_high_price_maximizes_export():
    rng = np.random.default_rng(4)
    data = _k3_data(rng)
    s = initial_state(CFG, data)
    s[CFG.layout.EP] = 1e3
    u, _, _ = greedy_action(s, None, 0, CFG)
    for i, mg in enumerate(CFG.microgrids):
        exc = exchange_power(i + 1, s, u, CFG)
        lowest = min(exchange_power(i + 1, s, np.eye(11)[CFG.layout.mg_u(i)[1]] * b, CFG)
                     for b in control_levels(mg.bess.u_min, mg.bess.u_max, CFG.levels)
                     if mg.bess.e_min <= mg.bess.step(s[CFG.layout.mg(i)[0]], b, CFG.delta) <= mg.bess.e_max)
        assert exc == pytest.approx(max(lowest, mg.exc_min))


@pytest.mark.parametrize("seed", range(4))
def test_refined_grid_changes_myopic_little(seed):
    rng = np.random.default_rng(seed)
    cfg = dataclasses.replace(_k1(), levels=CFG.levels)
    data = NetworkData(rng.uniform(20, 80, (1, 12)), rng.uniform(100, 200, (1, 12)), rng.uniform(0.05, 0.2, 12))
    coarse = myopic_baseline(cfg, data).total
    fine = myopic_baseline(dataclasses.replace(cfg, levels=2 * cfg.levels - 1), data).total
    assert abs(fine - coarse) <= 0.01 * abs(coarse)


@pytest.mark.parametrize("seed", range(3))
def test_exact_dp_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    cfg = _k1(rng)
    data = _k1_data(rng, 2)
    assert exact_dp(cfg, data, 2) == pytest.approx(brute_force_network(cfg, data, 2, cfg.levels), rel=1e-12)


def test_single_iteration_reproduces_myopic():
    rng = np.random.default_rng(8)
    data = _k3_data(rng)
    cfg = dataclasses.replace(CFG, explore=0.0)
    tr = adp_train(cfg, data, 1)
    assert np.all(tr.vfa.theta[-1] == 0)
    my = myopic_baseline(cfg, data)
    assert tr.cost_trace[0] == pytest.approx(my.total, rel=1e-12)
    one = simulate_policy(cfg, data, None, 1)
    assert one.total == my.stage_costs[0]


@pytest.mark.parametrize("seed", range(20))
def test_oracle_ordering_on_k1(seed):
    rng = np.random.default_rng(seed)
    cfg, data = _k1(rng), _k1_data(rng)
    ex = exact_dp(cfg, data, 3)
    adp = simulate_policy(cfg, data, adp_train(cfg, data, 200, seed=seed).vfa).total
    my = myopic_baseline(cfg, data).total
    assert ex <= adp + 1e-9
    assert adp <= my + 1e-9


def test_trained_k3_beats_myopic():
    data = _k3_data(np.random.default_rng(11))
    tr = adp_train(CFG, data, 150, seed=11, sigma_fraction=0.05)
    assert simulate_policy(CFG, data, tr.vfa).total <= myopic_baseline(CFG, data).total


def test_training_stays_bounded_and_feasible():
    rng = np.random.default_rng(12)
    cfg, data = _k1(rng), NetworkData(rng.uniform(0, 100, (1, 6)), rng.uniform(50, 300, (1, 6)),
                                      rng.uniform(0.02, 0.3, 6))
    tr = adp_train(cfg, data, 2000, seed=1, sigma_fraction=0.05)
    assert np.all(np.isfinite(tr.vfa.theta)) and np.all(np.isfinite(tr.theta_norms))
    assert np.max(np.abs(tr.cost_trace)) < 1e5
    run = simulate_policy(cfg, data, tr.vfa)
    for s, u in zip(run.states, run.controls):
        check_feasible(s, u, cfg)


def test_training_is_deterministic():
    data = _k3_data(np.random.default_rng(13), 6)
    a = adp_train(CFG, data, 20, seed=4, sigma_fraction=0.05)
    b = adp_train(CFG, data, 20, seed=4, sigma_fraction=0.05)
    assert a.vfa.theta.tobytes() == b.vfa.theta.tobytes()
    assert a.cost_trace.tobytes() == b.cost_trace.tobytes()


def test_surplus_produces_negative_stage_costs():
    n = 6
    data = NetworkData(np.full((3, n), 400.0), np.full((3, n), 50.0), np.full(n, 0.5))
    run = myopic_baseline(CFG, data)
    assert np.any(run.stage_costs < 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_myopic_trajectories_are_feasible(seed):
    rng = np.random.default_rng(seed)
    data = _k3_data(rng, 8)
    run = myopic_baseline(CFG, data)
    for s, u in zip(run.states, run.controls):
        check_feasible(s, u, CFG)

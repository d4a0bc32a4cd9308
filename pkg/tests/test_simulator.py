import math

import numpy as np
import pytest

from hdpid.controller import GainSet
from hdpid.plant import AircraftPlant
from hdpid.simulator import (
    AIRCRAFT_COLUMNS,
    IntegrationBlowup,
    Schedule,
    SimConfig,
    SingularInputError,
    read_trajectory_csv,
    rk4_step,
    run_closed_loop,
    run_ltv_surrogate,
)
from oracles import PRINTED_KI, PRINTED_KP

plant = AircraftPlant()
X0, U0 = [math.pi / 3, math.pi / 4], [math.pi / 3, 1.0]
REF_X, REF_U = [0.0, 0.0], [0.0, 0.0]


def short_config(**kw):
    base = dict(x0=X0, u0=U0, x_ref=REF_X, u_ref=REF_U, T=2.0, dt=1e-3, seed=0)
    base.update(kw)
    return SimConfig(**base)


def paper_gains():
    return GainSet(PRINTED_KP, PRINTED_KI, np.zeros((2, 2)))


def test_rk4_examples():
    assert rk4_step(lambda t, x: np.zeros(1), [5.0], 0.0, 0.1)[0] == 5.0
    assert rk4_step(lambda t, x: -x, [1.0], 0.0, 0.1)[0] == pytest.approx(math.exp(-0.1), abs=1e-7)
    assert rk4_step(lambda t, x: np.ones(1), [2.0], 0.0, 0.5)[0] == 2.5


def test_rk4_blowup_carries_step():
    with pytest.raises(IntegrationBlowup) as info:
        rk4_step(lambda t, x: np.array([np.inf]), [1.0], 0.0, 0.1, step=17)
    assert info.value.step == 17
    np.testing.assert_array_equal(info.value.state, [1.0])


def decay_error(dt, T=1.0):
    x = np.array([1.0])
    for k in range(int(round(T / dt))):
        x = rk4_step(lambda t, s: -s, x, k * dt, dt)
    return abs(x[0] - math.exp(-T))


def test_rk4_fourth_order():
    ratio = decay_error(0.1) / decay_error(0.05)
    assert 12.0 <= ratio <= 20.0


def test_schedule_parsing():
    assert Schedule.parse("once") == Schedule("once")
    assert Schedule.parse("none").kind == "none"
    assert Schedule.parse("every:25") == Schedule("every", 25)
    assert Schedule.parse("threshold:0.5") == Schedule("threshold", 0.5)
    for bad in ("every:0", "threshold:-1", "sometimes", "every:x"):
        with pytest.raises(ValueError):
            Schedule.parse(bad)
    assert str(Schedule.parse("every:25")) == "every:25"


def test_config_validation():
    with pytest.raises(ValueError):
        short_config(dt=0.0)
    with pytest.raises(ValueError):
        short_config(T=1.0, dt=0.3)
    assert short_config(T=20.0, dt=1e-3).steps == 20_000


def test_equilibrium_stays_put():
    cfg = SimConfig(x0=[0.0, 0.0], u0=[0.0, 1.0], x_ref=[0.0, 0.0], u_ref=[0.0, 1.0], T=1.0, L_d=(0.0, 0.0))
    tr = run_closed_loop(plant, GainSet.zeros(2, 2), cfg)
    assert np.all(tr.x == 0.0)
    assert np.all(tr.e == 0.0) and np.all(tr.de == 0.0)
    np.testing.assert_array_equal(tr.u, np.tile([0.0, 1.0], (tr.t.size, 1)))


def test_records_are_consistent():
    cfg = short_config()
    tr = run_closed_loop(plant, paper_gains(), cfg)
    assert tr.t.size == cfg.steps + 1
    np.testing.assert_allclose(np.diff(tr.t), cfg.dt, rtol=1e-9)
    np.testing.assert_array_equal(tr.e + tr.x, np.zeros_like(tr.x))
    lo, hi = plant.input_box
    assert np.all(tr.u >= lo) and np.all(tr.u <= hi)
    rlo, rhi = plant.rate_box
    assert np.all(tr.du >= rlo) and np.all(tr.du <= rhi)
    assert np.all(np.abs(tr.d) <= 0.25)
    # the error rate is the negated measured state rate
    f = np.array([plant.f(x, u) for x, u in zip(tr.x, tr.u)])
    np.testing.assert_allclose(tr.de, -(f + tr.d), atol=1e-12)
    np.testing.assert_allclose(tr.lyap_norm, np.hypot(np.linalg.norm(tr.e, axis=1), np.linalg.norm(tr.de, axis=1)))


def test_run_is_deterministic_and_seed_dependent():
    a = run_closed_loop(plant, paper_gains(), short_config(seed=4))
    b = run_closed_loop(plant, paper_gains(), short_config(seed=4))
    c = run_closed_loop(plant, paper_gains(), short_config(seed=5))
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != c.to_csv()


def test_hold_interval_shapes_disturbance():
    tr = run_closed_loop(plant, paper_gains(), short_config(hold_interval=0.1))
    first = tr.d[: 100]
    assert np.all(first == first[0])
    assert not np.array_equal(tr.d[100], tr.d[99])


def test_once_schedule_compensates_at_start():
    tr = run_closed_loop(plant, paper_gains(), short_config(schedule=Schedule("once")))
    assert len(tr.compensations) == 1
    t, dKp, dKi, lam = tr.compensations[0]
    assert t == 0.0 and dKp.shape == (2, 2) and dKi.shape == (2, 2)


def test_every_and_threshold_schedules():
    tr = run_closed_loop(plant, paper_gains(), short_config(T=0.5, schedule=Schedule("every", 100)))
    assert [c[0] for c in tr.compensations] == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4])
    tr = run_closed_loop(plant, paper_gains(), short_config(T=0.5, schedule=Schedule("threshold", 0.05)))
    assert tr.compensations[0][0] == 0.0
    assert len(tr.compensations) >= 2


def test_csv_round_trip(tmp_path):
    tr = run_closed_loop(plant, paper_gains(), short_config(T=0.1))
    path = tmp_path / "run.csv"
    text = tr.to_csv(path)
    assert text.splitlines()[0] == ",".join(AIRCRAFT_COLUMNS)
    cols = read_trajectory_csv(path)
    np.testing.assert_array_equal(cols["t"], tr.t)
    np.testing.assert_array_equal(cols["e_chi"], tr.e[:, 0])
    np.testing.assert_array_equal(cols["nz"], tr.u[:, 1])
    np.testing.assert_array_equal(tr.channel("de_gamma"), tr.de[:, 1])


def test_singular_input_reports_step():
    wide = AircraftPlant(phi_limit=math.pi / 2 - 2e-3, phi_rate_limit=100.0)
    cfg = short_config(u0=[1.56, 1.0], T=0.5)
    g = GainSet(np.zeros((2, 2)), [[-50.0, 0.0], [0.0, 0.0]], np.zeros((2, 2)))
    with pytest.raises(SingularInputError) as info:
        run_closed_loop(wide, g, cfg)
    assert info.value.step >= 0
    assert info.value.state is not None


def test_ltv_surrogate_decay():
    tr = run_ltv_surrogate(lambda t: -np.eye(2), lambda k, t: np.zeros(2), [1.0, 0.0], np.eye(2), (0.0, 5.0), 1e-3)
    np.testing.assert_allclose(np.linalg.norm(tr.e, axis=1), np.exp(-tr.t), atol=1e-6)


def test_ltv_surrogate_dissipative_is_monotone():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    J = (A - A.T) - 0.1 * np.eye(4)
    tr = run_ltv_surrogate(lambda t: J, lambda k, t: np.zeros(4), rng.normal(size=4), np.eye(4), (0.0, 3.0), 1e-3)
    assert np.all(np.diff(tr.lyap_norm) <= 1e-12)


def test_ltv_surrogate_bounded_under_disturbance():
    J = np.array([[-1.0, 3.0], [-3.0, -1.0]])
    L = 0.5
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(5001, 2))
    d = L * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    tr = run_ltv_surrogate(lambda t: J, lambda k, t: d[k], [0.0, 0.0], np.eye(2), (0.0, 5.0), 1e-3)
    # J + J' = -2 I, so |e| never leaves the ball of radius L
    assert np.max(np.linalg.norm(tr.e, axis=1)) <= L + 1e-9

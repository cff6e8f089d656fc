import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uavepg.ag_epg import DeployResult
from uavepg.baselines import (
    KINDS,
    BaselineConfig,
    replicator_step,
    run_baseline,
    run_brd_epg,
    run_etg,
    run_ga,
    strategy_lattice,
)
from uavepg.epg_core import ConvergenceTrace, DeployGame, GameConfig
from uavepg.topology import LinkTopology

from conftest import make_world

SQUARE = [(400, 400, 150), (1600, 400, 150), (1600, 1600, 150), (400, 1600, 150)]
USERS = [(350, 450), (450, 350), (1650, 450), (1550, 350), (1650, 1550), (1550, 1650), (350, 1550), (450, 1650)]
PATH = LinkTopology.from_edges(4, [(0, 1), (1, 2), (2, 3)])
SMALL = dict(ga_population=6, ga_generations=4, etg_grid=3, etg_grid_z=2, etg_power_levels=2, etg_rounds=3)


def _world():
    return make_world(SQUARE, USERS)


def test_replicator_examples():
    np.testing.assert_allclose(replicator_step([0.5, 0.5], [1.0, 0.0], 0.1), [0.525, 0.475])
    np.testing.assert_allclose(replicator_step([0.2, 0.3, 0.5], [0.4, 0.4, 0.4], 0.7), [0.2, 0.3, 0.5])


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=10), st.floats(0.01, 1.0), st.data())
def test_replicator_keeps_a_distribution(raw, step, data):
    x = np.array(raw) / np.sum(raw)
    f = np.array(data.draw(st.lists(st.floats(0, 1), min_size=len(x), max_size=len(x))))
    y = replicator_step(x, f, step)
    assert np.all(y >= 0) and y.sum() == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        BaselineConfig(kind="ppo")
    with pytest.raises(ValueError):
        BaselineConfig(ga_mutation=1.5)
    with pytest.raises(ValueError):
        BaselineConfig(ga_population=1)


def test_flat_utility_means_no_movement():
    w = _world()
    cfg = GameConfig(psi=(0, 0, 0), deploy_max_rounds=3)
    for kind in ("brd_epg", "brd_ncg"):
        res = run_baseline(kind, w, PATH, cfg, 0, None, BaselineConfig(kind=kind, **SMALL))
        np.testing.assert_array_equal(res.state.pos, w.uav_positions())


def test_all_baselines_share_the_result_schema():
    w = _world()
    cfg = GameConfig(deploy_max_rounds=3)
    for kind in KINDS:
        res = run_baseline(kind, w, PATH, cfg, 1, None, BaselineConfig(kind=kind, **SMALL))
        assert isinstance(res, DeployResult) and isinstance(res.trace, ConvergenceTrace)
        assert len(res.trace.potential) == res.trace.rounds
        assert np.all(res.state.pos >= res.game.box_lo) and np.all(res.state.pos <= res.game.box_hi)
        again = run_baseline(kind, w, PATH, cfg, 1, None, BaselineConfig(kind=kind, **SMALL))
        np.testing.assert_array_equal(res.state.pos, again.state.pos)


def test_ga_pure_copying():
    w = _world()
    bcfg = BaselineConfig(kind="ga", ga_population=5, ga_generations=6, ga_crossover=0.0, ga_mutation=0.0)
    res = run_ga(w, PATH, GameConfig(), 2, None, bcfg)
    seq = res.trace.potential
    assert len(seq) == 6
    assert all(b >= a for a, b in zip(seq, seq[1:]))
    assert seq[0] >= res.trace.initial_potential


def test_ga_two_point_landscape():
    w = _world()
    bcfg = BaselineConfig(kind="ga", ga_population=2, ga_generations=5, ga_crossover=0.0, ga_mutation=0.0)
    res = run_ga(w, PATH, GameConfig(), 9, None, bcfg)
    # with no variation the better of the two founders takes over
    assert len(set(res.trace.potential)) == 1
    assert res.trace.potential[0] >= res.trace.initial_potential
    assert res.evaluation.potential == pytest.approx(res.trace.potential[-1])


def test_lattice_inside_box():
    w = _world()
    game = DeployGame(w, PATH, GameConfig())
    lat = strategy_lattice(np.array([10.0, 1990.0, 150.0]), game, BaselineConfig(kind="etg"))
    assert lat.shape == (5 * 5 * 3 * 4, 4)
    assert np.all(lat[:, :3] >= game.box_lo) and np.all(lat[:, :3] <= game.box_hi)


def test_etg_shares_are_distributions():
    w = _world()
    res = run_etg(w, PATH, GameConfig(), 0, None, BaselineConfig(kind="etg", **SMALL))
    shares = [float(s) for s in res.trace.notes[0].split(": ")[1].split(",")]
    assert all(0 < s <= 1 for s in shares)


def test_brd_epg_never_lowers_potential():
    w = _world()
    res = run_brd_epg(w, PATH, GameConfig(deploy_max_rounds=5), 0)
    seq = [res.trace.initial_potential] + res.trace.potential
    assert all(b >= a for a, b in zip(seq, seq[1:]))

import numpy as np
import pytest
from scipy import stats as sstats

from eetg import qd
from eetg import rng as rng_mod
from eetg.qd import Archive, InsertOutcome, QDConfig, iso_line_variation, run_phase1, select
from eetg.terrain import EnvCell, EnvType
from eetg.tg import PARAM_HIGH, PARAM_LOW, PARAM_RANGE, TGParams


def mock_evaluator(tg: TGParams, cell: EnvCell, seed: int) -> float:
    # separable synthetic objective: best swing is exactly 0.04 everywhere
    return -abs(tg.swing - 0.04)


class TestArchive:
    def test_insert_semantics(self):
        a = Archive()
        cell = EnvCell.make(EnvType.SLOPE, 4)
        vec = np.array([0.02, 0.0, 0.1, 0.0, 1.0])
        assert a.try_insert(cell, vec, 10.0, 1) == InsertOutcome.INSERTED
        assert a.try_insert(cell, vec, 10.0, 2) == InsertOutcome.REJECTED  # tie keeps incumbent
        assert a.get(0, 4).added_at_eval == 1
        assert a.try_insert(cell, vec, 10.5, 3) == InsertOutcome.REPLACED
        assert a.get(0, 4).fitness == 10.5

    def test_nonfinite_fitness_rejected(self):
        a = Archive()
        cell = EnvCell.make(EnvType.BEAM, 0)
        assert a.try_insert(cell, np.zeros(5), float("nan"), 0) == InsertOutcome.REJECTED
        assert a.coverage == 0

    def test_round_trip(self):
        a = Archive()
        rng = np.random.default_rng(0)
        for i in range(25):
            cell = EnvCell.from_flat_index(int(rng.integers(80)))
            a.try_insert(cell, rng.uniform(PARAM_LOW, PARAM_HIGH), float(rng.normal()), i)
        b = Archive.from_dict(a.to_dict(seed=1))
        assert np.array_equal(a.filled, b.filled)
        assert np.array_equal(a.params[a.filled], b.params[b.filled])
        assert np.array_equal(a.fitness[a.filled], b.fitness[b.filled])

    def test_gait_histogram_sums_to_coverage(self):
        a = Archive()
        rng = np.random.default_rng(1)
        for i in range(30):
            cell = EnvCell.from_flat_index(int(rng.integers(80)))
            a.try_insert(cell, rng.uniform(PARAM_LOW, PARAM_HIGH), float(i), i)
        assert sum(a.gait_histogram().values()) == a.coverage


class TestSelect:
    def _slope_only_archive(self):
        a = Archive()
        rng = np.random.default_rng(2)
        for v in range(20):
            a.try_insert(EnvCell.make(EnvType.SLOPE, v),
                         rng.uniform(PARAM_LOW, PARAM_HIGH), float(v), v)
        return a

    def test_goal_switch_frequency(self):
        a = self._slope_only_archive()
        rng = np.random.default_rng(3)
        n = 10_000
        counts = {t: 0 for t in range(4)}
        for _ in range(n):
            _, target = select(a, rng, 0.7)
            counts[int(target.env_type)] += 1
        # chi-square against (0.7, 0.1, 0.1, 0.1)
        expected = np.array([0.7, 0.1, 0.1, 0.1]) * n
        observed = np.array([counts[t] for t in range(4)])
        _, p = sstats.chisquare(observed, expected)
        assert p > 0.01
        # binomial 3-sigma band on the same-type frequency
        sd = np.sqrt(n * 0.7 * 0.3)
        assert abs(counts[0] - 0.7 * n) < 3 * sd

    def test_target_variation_uniform(self):
        a = self._slope_only_archive()
        rng = np.random.default_rng(4)
        n = 100_000
        hist = np.zeros(20)
        for _ in range(n):
            _, target = select(a, rng, 0.7)
            hist[target.variation_index] += 1
        _, p = sstats.chisquare(hist)
        assert p > 0.01

    def test_single_elite_always_selected(self):
        a = Archive()
        vec = np.array([0.01, 0.02, 0.03, 0.0, 2.0])
        a.try_insert(EnvCell.make(EnvType.UNEVEN, 7), vec, 5.0, 0)
        rng = np.random.default_rng(5)
        for _ in range(50):
            parent, _ = select(a, rng)
            assert parent.fitness == 5.0
            assert np.allclose(parent.tg.as_array(), vec)

    def test_empty_archive_raises(self):
        with pytest.raises(ValueError):
            select(Archive(), np.random.default_rng(0))


class TestIsoLine:
    def test_degenerate_operator_is_identity(self):
        rng = np.random.default_rng(6)
        x1 = rng.uniform(PARAM_LOW, PARAM_HIGH)
        x2 = rng.uniform(PARAM_LOW, PARAM_HIGH)
        out = iso_line_variation(x1, x2, rng, iso_sigma=0.0, line_sigma=0.0)
        assert np.array_equal(out, qd.clamp_params(x1))

    def test_variance_scales_with_range(self):
        # x2 == x1 kills the line term; center start avoids clamping
        x1 = (PARAM_LOW + PARAM_HIGH) / 2.0
        rng = np.random.default_rng(7)
        sigma = 0.01
        samples = np.array([iso_line_variation(x1, x1, rng, sigma, 0.2)
                            for _ in range(100_000)])
        var = samples.var(axis=0)
        expected = (sigma * PARAM_RANGE) ** 2
        assert np.allclose(var, expected, rtol=0.05)

    def test_mean_unbiased_before_clamp(self):
        x1 = (PARAM_LOW + PARAM_HIGH) / 2.0
        x2 = x1 + 0.1 * PARAM_RANGE
        rng = np.random.default_rng(8)
        n = 100_000
        samples = np.array([iso_line_variation(x1, x2, rng, 0.005, 0.05)
                            for _ in range(n)])
        # per-dim standard error of the mean
        se = samples.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0) - x1) < 3.5 * se)

    def test_output_always_in_box(self):
        rng = np.random.default_rng(9)
        for _ in range(2000):
            x1 = rng.uniform(PARAM_LOW, PARAM_HIGH)
            x2 = rng.uniform(PARAM_LOW, PARAM_HIGH)
            out = iso_line_variation(x1, x2, rng, 0.3, 1.0)
            assert np.all(out >= PARAM_LOW) and np.all(out <= PARAM_HIGH)
            assert out[4] < 4.0


class TestPhase1:
    def test_init_fills_exactly_eight_cells(self):
        cfg = QDConfig(total_evals=8, master_seed=11)
        archive = run_phase1(cfg, mock_evaluator)
        assert archive.coverage == 8

    def test_init_deterministic(self):
        cfg = QDConfig(total_evals=8, master_seed=11)
        a = run_phase1(cfg, mock_evaluator)
        b = run_phase1(cfg, mock_evaluator)
        assert a.to_dict(seed=0) == b.to_dict(seed=0)

    def test_initial_params_within_ranges(self):
        cfg = QDConfig(total_evals=8, master_seed=12)
        archive = run_phase1(cfg, mock_evaluator)
        filled = archive.params[archive.filled]
        assert np.all(filled >= PARAM_LOW) and np.all(filled <= PARAM_HIGH)

    def test_mock_objective_convergence(self):
        cfg = QDConfig(total_evals=50_000, master_seed=13, batch_size=64)
        archive = run_phase1(cfg, mock_evaluator)
        assert archive.coverage == 80
        swing = archive.params[:, :, 0][archive.filled]
        assert np.all(np.abs(swing - 0.04) <= 0.005)

    def test_elitism_monotone_across_snapshots(self):
        snaps = []
        cfg = QDConfig(total_evals=5000, master_seed=14, batch_size=50)
        run_phase1(cfg, mock_evaluator,
                   snapshot_cb=lambda a, evals: snaps.append(a.fitness.copy()))
        assert len(snaps) >= 9
        for earlier, later in zip(snaps, snaps[1:]):
            both = ~np.isnan(earlier)
            assert np.all(later[both] >= earlier[both])

    def test_coverage_non_decreasing(self):
        covs = []
        cfg = QDConfig(total_evals=2000, master_seed=15)
        run_phase1(cfg, mock_evaluator,
                   snapshot_cb=lambda a, evals: covs.append(a.coverage))
        assert covs == sorted(covs)
        assert covs[-1] >= 8

    def test_parallel_map_gives_identical_archive(self):
        from eetg.sim import parallel_map
        cfg = QDConfig(total_evals=640, master_seed=16)
        serial = run_phase1(cfg, mock_evaluator)
        threaded = run_phase1(cfg, mock_evaluator,
                              map_fn=lambda f, items: parallel_map(f, items, 4))
        assert serial.to_dict(seed=0) == threaded.to_dict(seed=0)

    def test_evaluator_failure_rejected_not_fatal(self):
        def flaky(tg, cell, seed):
            return float("nan") if cell.variation_index % 2 else 1.0
        cfg = QDConfig(total_evals=400, master_seed=17)
        archive = run_phase1(cfg, flaky)
        filled_cells = archive.filled_cells()
        assert all(v % 2 == 0 for _, v in filled_cells)

    def test_eval_offset_continues_seed_stream(self):
        seeds_seen = []

        def spy(tg, cell, seed):
            seeds_seen.append(seed)
            return 0.0
        cfg = QDConfig(total_evals=100, master_seed=18)
        run_phase1(cfg, spy)
        expected_first = rng_mod.derive_seed(18, rng_mod.PHASE1, 0, 0)
        assert seeds_seen[0] == expected_first
        assert len(set(seeds_seen)) == len(seeds_seen)

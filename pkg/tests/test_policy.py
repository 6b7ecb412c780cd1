import numpy as np
import pytest

from eetg import _kernels as K
from eetg import policy as pol
from eetg.ars import ArsConfig, ObsNormalizer
from eetg.policy import PolicyDef, assemble_input, compose_targets, forward, train_policy
from eetg.sim import RewardConfig, SimConfig, rollout
from eetg.terrain import EnvCell, EnvType
from eetg.tg import TGParams

TG = TGParams(0.05, 0.02, 0.1, 0.01, 1.0)
CELL = EnvCell.make(EnvType.STAIRS, 4)


class TestLayout:
    @pytest.mark.parametrize("variant,cond,total", [
        ("plain", 3, 48),
        ("tg_conditioned", 8, 53),
        ("env_encoded", 8, 53),
    ])
    def test_input_dims(self, variant, cond, total):
        d = PolicyDef(variant=variant)
        assert d.cond_dim == cond
        assert d.input_dim == total

    def test_onehot80_encoding_dim(self):
        d = PolicyDef(variant="env_encoded", env_encoding="onehot80")
        assert d.cond_dim == 83
        assert d.input_dim == 128

    def test_linear_param_count(self):
        d = PolicyDef(variant="tg_conditioned")
        assert d.param_count == 16 * 53 + 16

    def test_mlp_param_count(self):
        d = PolicyDef(variant="plain", arch="mlp", hidden=64)
        assert d.param_count == 64 * 48 + 64 + 16 * 64 + 16

    def test_invalid_variant_rejected(self):
        with pytest.raises(ValueError):
            PolicyDef(variant="wat")


class TestConditioning:
    def test_plain_uses_normalized_stl(self):
        d = PolicyDef(variant="plain")
        cond = d.conditioning(TG, None)
        assert np.allclose(cond, [0.05 / 0.08, 0.02 / 0.15, 0.1 / 0.2], atol=1e-12)

    def test_tg_conditioning_repeats_full_vector(self):
        d = PolicyDef(variant="tg_conditioned")
        cond = d.conditioning(TG, CELL)
        assert cond.shape == (8,)
        assert np.allclose(cond[3:6], cond[:3], atol=1e-12)
        assert cond[6] == pytest.approx((0.01 + 0.05) / 0.17, abs=1e-12)
        assert cond[7] == pytest.approx(1.0 / 4.0, abs=1e-12)

    def test_env_encoding_compact(self):
        d = PolicyDef(variant="env_encoded")
        cond = d.conditioning(TG, CELL)
        assert np.array_equal(cond[3:7], [0, 1, 0, 0])  # STAIRS one-hot
        assert cond[7] == pytest.approx(4 / 19)

    def test_env_encoding_requires_cell(self):
        with pytest.raises(ValueError):
            PolicyDef(variant="env_encoded").conditioning(TG, None)

    def test_two_tgs_produce_different_inputs(self):
        d = PolicyDef(variant="tg_conditioned")
        other = TGParams(0.07, 0.02, 0.1, 0.01, 1.0)
        obs = np.zeros(33)
        x1 = assemble_input(obs, np.zeros(33), np.ones(33), np.zeros(4),
                            np.full(4, 1.25), 1.25, d.conditioning(TG, CELL))
        x2 = assemble_input(obs, np.zeros(33), np.ones(33), np.zeros(4),
                            np.full(4, 1.25), 1.25, d.conditioning(other, CELL))
        assert not np.array_equal(x1, x2)


class TestForward:
    def test_zero_params_zero_outputs(self):
        d = PolicyDef(variant="plain")
        x = np.random.default_rng(0).normal(size=d.input_dim)
        res, freq = forward(d, d.init_params(), x)
        assert np.array_equal(res, np.zeros((4, 3)))
        assert np.array_equal(freq, np.zeros(4))

    def test_linear_one_hot_reads_column(self):
        d = PolicyDef(variant="plain")
        rng = np.random.default_rng(1)
        params = rng.normal(0, 0.01, d.param_count)
        w1, b1, _, _ = d.unpack(params)
        j = 17
        x = np.zeros(d.input_dim)
        x[j] = 1.0
        raw = w1 @ x + b1
        assert np.allclose(raw, w1[:, j] + b1, atol=1e-15)

    def test_outputs_always_within_clamps(self):
        rng = np.random.default_rng(2)
        for arch in ("linear", "mlp"):
            d = PolicyDef(variant="tg_conditioned", arch=arch, hidden=8)
            for _ in range(200):
                params = rng.normal(0, 5.0, d.param_count)
                x = rng.normal(0, 5.0, d.input_dim)
                res, freq = forward(d, params, x)
                assert np.all(np.abs(res) <= 0.05 + 1e-12)
                assert np.all(np.abs(freq) <= 0.625 + 1e-12)

    def test_reference_matches_kernel(self):
        rng = np.random.default_rng(3)
        for arch, mode in [("linear", 1), ("mlp", 2)]:
            d = PolicyDef(variant="tg_conditioned", arch=arch, hidden=16)
            params = rng.normal(0, 0.5, d.param_count)
            x = rng.normal(0, 1.0, d.input_dim)
            w1, b1, w2, b2 = d.unpack(params)
            out16 = np.zeros(16)
            K.policy_forward(mode, w1, b1, w2, b2, x, out16, np.zeros(w1.shape[0]))
            res, freq = forward(d, params, x)
            assert np.allclose(0.05 * np.clip(out16[:12], -1, 1).reshape(4, 3), res, atol=1e-12)
            assert np.allclose(0.625 * np.clip(out16[12:], -1, 1), freq, atol=1e-12)

    def test_assemble_input_matches_kernel(self):
        rng = np.random.default_rng(4)
        d = PolicyDef(variant="env_encoded")
        obs = rng.normal(size=33)
        mean, std = rng.normal(size=33), rng.uniform(0.5, 2.0, 33)
        phases = rng.uniform(0, 2 * np.pi, 4)
        freqs = rng.uniform(0, 2.5, 4)
        cond = d.conditioning(TG, CELL)
        ref = assemble_input(obs, mean, std, phases, freqs, 1.25, cond)
        out = np.zeros(d.input_dim)
        K.assemble_input(obs, mean, std, phases, freqs, 1.25, cond, out)
        assert np.allclose(ref, out, atol=1e-12)

    def test_dimension_mismatch_raises(self):
        d = PolicyDef(variant="plain")
        with pytest.raises(ValueError):
            forward(d, d.init_params(), np.zeros(99))
        with pytest.raises(ValueError):
            d.unpack(np.zeros(7))


class TestComposeTargets:
    def test_zero_residuals_identity(self):
        nominal = np.array([[0.03, 0.08, -0.27]] * 4)
        out = compose_targets(nominal, np.zeros((4, 3)))
        assert np.array_equal(out, nominal)

    def test_simple_addition(self):
        nominal = np.array([[0.03, 0.0, -0.27]] * 4)
        res = np.array([[0.05, 0.0, 0.0]] * 4)
        out = compose_targets(nominal, res)
        assert np.allclose(out[0], [0.08, 0.0, -0.27], atol=1e-12)

    def test_residual_clamped_before_addition(self):
        nominal = np.array([[0.0, 0.0, -0.27]] * 4)
        res = np.array([[0.2, 0.0, 0.0]] * 4)  # beyond the 0.05 clamp
        out = compose_targets(nominal, res)
        assert np.allclose(out[0], [0.05, 0.0, -0.27], atol=1e-12)

    def test_workspace_sphere_enforced(self):
        nominal = np.array([[0.0, 0.0, -0.34]] * 4)
        res = np.array([[0.05, 0.05, -0.05]] * 4)
        out = compose_targets(nominal, res, leg_length=0.35)
        assert np.all(np.linalg.norm(out, axis=1) <= 0.35 + 1e-12)


class TestTraining:
    def test_zero_budget_returns_zero_policy(self):
        d = PolicyDef(variant="plain")
        res = train_policy(lambda rng: (TG, CELL), d, ArsConfig(n_directions=2, top_directions=1),
                           budget=0, master_seed=0, seed_tag=(2, 0),
                           sim_cfg=SimConfig(), reward_cfg=RewardConfig())
        assert np.array_equal(res.params, d.init_params())
        assert res.evals_used == 0 and res.updates == 0

    def test_budget_accounting_exact_updates(self):
        d = PolicyDef(variant="plain")
        ars = ArsConfig(n_directions=2, top_directions=1)
        res = train_policy(lambda rng: (TG, CELL), d, ars, budget=13, master_seed=0,
                           seed_tag=(2, 0), sim_cfg=SimConfig(max_episode_s=0.5),
                           reward_cfg=RewardConfig())
        assert res.updates == 3  # 3 * 4 = 12 <= 13 < 16
        assert res.evals_used == 12

    @pytest.mark.parametrize("mode", ["per_update", "per_direction", "per_rollout"])
    def test_resample_modes_run_and_are_deterministic(self, mode):
        d = PolicyDef(variant="tg_conditioned")
        ars = ArsConfig(n_directions=2, top_directions=1, env_resample=mode)
        sampler = lambda rng: (TG, EnvCell.from_flat_index(int(rng.integers(80))))
        kwargs = dict(budget=8, master_seed=5, seed_tag=(2, 1),
                      sim_cfg=SimConfig(max_episode_s=0.5), reward_cfg=RewardConfig())
        a = train_policy(sampler, d, ars, **kwargs)
        b = train_policy(sampler, d, ars, **kwargs)
        assert np.array_equal(a.params, b.params)
        assert a.evals_used == b.evals_used == 8

    def test_worker_count_does_not_change_result(self):
        d = PolicyDef(variant="plain")
        ars = ArsConfig(n_directions=4, top_directions=2)
        kwargs = dict(budget=16, master_seed=3, seed_tag=(2, 2),
                      sim_cfg=SimConfig(max_episode_s=0.5), reward_cfg=RewardConfig())
        a = train_policy(lambda rng: (TG, CELL), d, ars, workers=1, **kwargs)
        b = train_policy(lambda rng: (TG, CELL), d, ars, workers=4, **kwargs)
        assert np.array_equal(a.params, b.params)


class TestSerialization:
    def test_policy_record_round_trip(self, tmp_path):
        from eetg.artifacts import load_policy, save_policy
        from eetg.bench import PolicyRecord
        d = PolicyDef(variant="env_encoded", arch="mlp", hidden=8)
        rng = np.random.default_rng(6)
        norm = ObsNormalizer(33)
        norm.update_vectors(rng.normal(size=(10, 33)))
        rec = PolicyRecord(params=rng.normal(size=d.param_count), normalizer=norm,
                           trained_cell=17, evals_used=4, updates=2)
        path = tmp_path / "policy.json"
        save_policy(path, d, rec, "PMTG_Ind")
        d2, rec2, meta = load_policy(path)
        assert d2 == d
        assert np.array_equal(rec2.params, rec.params)
        assert rec2.trained_cell == 17
        assert np.array_equal(rec2.normalizer.mean, norm.mean)
        assert meta["variant"] == "PMTG_Ind"
        assert meta["input_layout"][0] == ["robot_obs", 33]

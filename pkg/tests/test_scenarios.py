"""Presets, config plumbing, run loop, outcome classification, sweeps."""

import json
import logging
from dataclasses import replace

import numpy as np
import pytest

from graspfilter.filtering import FilterGains
from graspfilter.scenarios import (
    ConfigError,
    MalformedConfigError,
    PRESET_NAMES,
    ScenarioConfig,
    VisionConfig,
    _draw_initial,
    compare_to_reference,
    config_digest,
    config_from_dict,
    config_to_dict,
    monte_carlo,
    preset,
    run,
    seed_sweep,
    validate_config,
)
from graspfilter.sensing import HapticChannel
from graspfilter.so3 import orthonormality_defect, rot_y, rot_z
from graspfilter.superquadric import Superquadric

PEG = Superquadric(0.25, 0.05, 0.05, 1.0, 1.0)


def _axis_grasp_config(**overrides):
    """Long-axis pinch with the true pose at identity; converges from most starts."""
    base = dict(
        name="axis_grasp",
        superquadric=PEG,
        channels=[
            HapticChannel(1.0, np.array([-0.3, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0])),
            HapticChannel(1.0, np.array([0.3, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])),
        ],
        gains=FilterGains(-1.0, -1.0, 0.0),
        r_hat0=np.eye(3),
        r_true=np.eye(3),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


class TestPresets:
    def test_all_presets_validate(self):
        for name in PRESET_NAMES:
            validate_config(preset(name))

    def test_unknown_preset_raises(self):
        with pytest.raises(MalformedConfigError):
            preset("case_z")

    def test_expected_names(self):
        assert PRESET_NAMES == (
            "case_a",
            "case_b",
            "case_c",
            "case_d",
            "edge_grasp",
        )

    def test_case_a_parameters(self):
        cfg = preset("case_a")
        assert np.allclose(cfg.channels[0].ee_position_world, [-0.3, -0.3, 0.0])
        assert np.allclose(cfg.channels[0].f_measured, [-1.0, 0.0, 0.0])
        assert np.allclose(cfg.channels[1].f_measured, [1.0, 0.0, 0.0])
        assert cfg.gains.beta1 == cfg.gains.beta2 == -1.0
        assert cfg.gains.k_p == 0.0
        assert np.allclose(cfg.r_hat0, np.eye(3))
        assert np.allclose(cfg.r_true, rot_z(np.pi / 4), atol=1e-15)

    def test_case_b_true_rotation(self):
        cfg = preset("case_b")
        assert np.allclose(cfg.r_true, rot_z(np.pi / 4) @ rot_y(-np.pi / 4), atol=1e-15)

    def test_case_c_vision_is_yaw_only(self):
        cfg = preset("case_c")
        assert cfg.gains.k_p == 1.0
        assert cfg.vision is not None
        assert np.allclose(cfg.vision.r_peg_cam, rot_z(np.pi / 4), atol=1e-15)
        assert np.allclose(cfg.vision.r_cam_world, np.eye(3))

    def test_case_d_noise_levels(self):
        cfg = preset("case_d")
        assert [m.variance for m in cfg.noise] == [0.5, 2.0]
        assert all(m.sample_time == 0.2 for m in cfg.noise)
        assert all(m.mean == 0.0 for m in cfg.noise)

    def test_edge_grasp_sensor_frames(self):
        cfg = preset("edge_grasp")
        s = np.sqrt(0.5)
        for ch in cfg.channels:
            assert ch.sensor_rotation is not None
            assert orthonormality_defect(ch.sensor_rotation) < 1e-15
        f1 = cfg.channels[0].sensor_rotation @ cfg.channels[0].f_measured
        f2 = cfg.channels[1].sensor_rotation @ cfg.channels[1].f_measured
        assert np.allclose(f1, [0.0, s, s], atol=1e-15)
        assert np.allclose(f2, -f1, atol=1e-15)
        assert cfg.superquadric.eps1 == cfg.superquadric.eps2 == 0.2


class TestConfigSerialization:
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_roundtrip(self, name):
        cfg = preset(name)
        data = config_to_dict(cfg)
        again = config_to_dict(config_from_dict(data))
        assert again == data
        json.dumps(data)  # plain JSON-able

    def test_digest_stable_and_sensitive(self):
        a = config_digest(preset("case_a"))
        b = config_digest(preset("case_a"))
        assert a == b and len(a) == 64
        cfg = preset("case_a")
        cfg.seed = 123
        assert config_digest(cfg) != a

    def test_unknown_field_rejected(self):
        data = config_to_dict(preset("case_a"))
        data["typo_field"] = 1
        with pytest.raises(MalformedConfigError):
            config_from_dict(data)

    def test_missing_field_rejected(self):
        data = config_to_dict(preset("case_a"))
        del data["superquadric"]
        with pytest.raises(MalformedConfigError):
            config_from_dict(data)

    def test_wrong_schema_version_rejected(self):
        data = config_to_dict(preset("case_a"))
        data["schema_version"] = 99
        with pytest.raises(MalformedConfigError):
            config_from_dict(data)

    def test_non_mapping_rejected(self):
        with pytest.raises(MalformedConfigError):
            config_from_dict([1, 2, 3])

    def test_semantic_error_is_config_error(self):
        data = config_to_dict(preset("case_a"))
        data["superquadric"]["ax"] = -1.0
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict(data)
        assert not isinstance(excinfo.value, MalformedConfigError)


class TestValidation:
    def test_vision_weight_without_vision(self):
        cfg = _axis_grasp_config(gains=FilterGains(-1.0, -1.0, 1.0))
        with pytest.raises(ConfigError, match="vision"):
            validate_config(cfg)

    def test_end_effector_inside_object(self):
        cfg = _axis_grasp_config()
        cfg.channels[0] = replace(
            cfg.channels[0], ee_position_world=np.array([0.01, 0.0, 0.0])
        )
        with pytest.raises(ConfigError, match="inside"):
            validate_config(cfg)

    def test_end_effector_at_origin(self):
        cfg = _axis_grasp_config()
        cfg.channels[0] = replace(
            cfg.channels[0], ee_position_world=np.zeros(3)
        )
        with pytest.raises(ConfigError, match="origin"):
            validate_config(cfg)

    def test_forces_must_oppose(self):
        cfg = _axis_grasp_config()
        cfg.channels[1] = replace(
            cfg.channels[1], f_measured=np.array([0.0, 1.0, 0.0])
        )
        with pytest.raises(ConfigError, match="oppose"):
            validate_config(cfg)

    def test_sample_time_must_align_with_dt(self):
        cfg = preset("case_d")
        cfg.noise[0] = replace(cfg.noise[0], sample_time=0.015)
        with pytest.raises(ConfigError, match="sample_time"):
            validate_config(cfg)

    def test_duration_must_be_whole_steps(self):
        cfg = _axis_grasp_config(duration=0.015)
        with pytest.raises(ConfigError, match="duration"):
            validate_config(cfg)

    def test_negative_seed_rejected(self):
        cfg = _axis_grasp_config(seed=-1)
        with pytest.raises(ConfigError, match="seed"):
            validate_config(cfg)

    def test_channel_count(self):
        cfg = _axis_grasp_config()
        cfg.channels = cfg.channels[:1]
        cfg.noise = [None]
        with pytest.raises(ConfigError, match="two channels"):
            validate_config(cfg)

    def test_bad_r_hat0(self):
        cfg = _axis_grasp_config(r_hat0=np.ones((3, 3)))
        with pytest.raises(ConfigError, match="r_hat0"):
            validate_config(cfg)


class TestRun:
    def test_row_count_and_time_axis(self):
        rec = run(preset("case_a"))
        assert rec.n_rows == 6001
        assert rec.t[0] == 0.0
        assert rec.t[-1] == pytest.approx(60.0, abs=1e-9)

    def test_logged_rotations_stay_orthonormal(self):
        rec = run(preset("case_b"))
        for idx in range(0, rec.n_rows, 200):
            assert orthonormality_defect(rec.r_hat[idx]) < 1e-9
        assert rec.renormalizations == 0

    def test_case_a_converges_to_quarter_turn_yaw(self):
        rec = run(preset("case_a"))
        assert rec.outcome == "converged"
        assert rec.final_trace_error < 1e-9
        assert np.isfinite(rec.settle_time)
        assert rec.converge_time <= rec.settle_time

    def test_axis_angle_stays_in_half_turn_ball(self):
        rec = run(preset("case_b"))
        norms = np.linalg.norm(rec.axis_angle, axis=1)
        assert norms.max() <= np.pi + 1e-12

    def test_euler_nan_at_gimbal_rows(self):
        cfg = _axis_grasp_config(r_hat0=rot_y(np.pi / 2))
        rec = run(cfg)
        assert np.all(np.isnan(rec.euler[0]))
        assert np.all(np.isfinite(rec.euler[-1]))
        assert rec.outcome == "converged"

    def test_stop_tol_truncates(self):
        rec = run(preset("case_a"), stop_tol=1e-2)
        assert rec.n_rows < 6001
        assert rec.trace_error[-1] < 1e-2
        assert rec.outcome == "converged"
        assert np.all(rec.trace_error[:-1] >= 1e-2)

    def test_summary_is_json_ready(self):
        rec = run(preset("case_a"), stop_tol=1e-2)
        text = json.dumps(rec.summary())
        back = json.loads(text)
        assert back["outcome"] == "converged"
        assert back["rows"] == rec.n_rows

    def test_validation_runs_by_default(self):
        cfg = _axis_grasp_config(gains=FilterGains(-1.0, -1.0, 2.0))
        with pytest.raises(ConfigError):
            run(cfg)


class TestOutcomes:
    def test_stalled_edge_grasp_without_correction(self):
        cfg = preset("edge_grasp")
        cfg.force_frame_correction = False
        rec = run(cfg)
        assert rec.outcome == "stalled"
        assert np.array_equal(rec.r_hat[-1], cfg.r_hat0)
        assert rec.final_trace_error > 1.0

    def test_corrected_edge_grasp_converges(self):
        rec = run(preset("edge_grasp"))
        assert rec.outcome == "converged"
        assert rec.final_trace_error < 1e-9

    def test_anti_aligned_saddle(self):
        # exact half-turn about z: expected and measured forces are exactly
        # opposite on both arms, the correction is identically zero
        r0 = np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
        rec = run(_axis_grasp_config(r_hat0=r0))
        assert rec.outcome == "anti_aligned"
        assert np.array_equal(rec.r_hat[-1], r0)

    def test_unstable_set_proximity_with_vision(self, caplog):
        # vision-only config parked exactly on the half-turn set relative to
        # the vision rotation: the innovation vanishes and the run reports
        # the proximity instead of convergence
        flip_x = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
        cfg = preset("case_a")
        cfg.gains = FilterGains(0.0, 0.0, 1.0)
        cfg.vision = VisionConfig("constant", np.eye(3), rot_z(np.pi / 4))
        cfg.r_hat0 = rot_z(np.pi / 4) @ flip_x
        with caplog.at_level(logging.WARNING, logger="graspfilter.scenarios"):
            rec = run(cfg)
        assert rec.outcome == "unstable_set_proximity"
        assert rec.unstable_distance[-1] == pytest.approx(0.0, abs=1e-12)
        assert any("unstable" in m for m in caplog.messages)

    def test_case_d_never_settles(self):
        rec = run(preset("case_d"))
        assert rec.outcome == "max_time"
        assert np.isnan(rec.settle_time)


class TestDeterminism:
    def test_noise_free_runs_identical(self):
        a, b = run(preset("case_b")), run(preset("case_b"))
        assert np.array_equal(a.r_hat, b.r_hat)
        assert np.array_equal(a.trace_error, b.trace_error)

    def test_noisy_run_reproducible_per_seed(self):
        a, b = run(preset("case_d")), run(preset("case_d"))
        assert np.array_equal(a.r_hat, b.r_hat)

    def test_seed_changes_noisy_run(self):
        a = run(preset("case_d"))
        cfg = preset("case_d", seed=1)
        b = run(cfg)
        assert not np.array_equal(a.r_hat, b.r_hat)
        assert a.config_digest != b.config_digest


def _mc_config():
    cfg = preset("case_a")
    cfg.gains = FilterGains(-1.0, -1.0, 1.0)
    cfg.vision = VisionConfig("true_rotation")
    return cfg


class TestMonteCarlo:
    def test_small_sweep_all_converge(self):
        res = monte_carlo(_mc_config(), 8, seed=5)
        assert res.converged_fraction == 1.0
        assert res.outcome_counts == {"converged": 8}
        assert res.worst_final_error < 1e-2
        assert np.isfinite(res.median_settle_time)

    def test_identical_inputs_identical_summary(self):
        r1 = monte_carlo(_mc_config(), 6, seed=9)
        r2 = monte_carlo(_mc_config(), 6, seed=9)
        for a, b in zip(r1.runs, r2.runs):
            assert a.final_trace_error == b.final_trace_error
            assert np.array_equal(a.final_r_hat, b.final_r_hat)

    def test_worker_count_does_not_change_results(self):
        serial = monte_carlo(_mc_config(), 6, seed=2, workers=1)
        parallel = monte_carlo(_mc_config(), 6, seed=2, workers=3)
        for a, b in zip(serial.runs, parallel.runs):
            assert a.outcome == b.outcome
            assert np.array_equal(a.final_r_hat, b.final_r_hat)

    def test_start_at_truth_settles_immediately(self):
        cfg = _mc_config()
        res = monte_carlo(cfg, 1, seed=0, initial_rotations=[cfg.r_true])
        assert res.runs[0].converge_time == 0.0
        assert res.converged_fraction == 1.0
        assert res.median_settle_time == 0.0

    def test_rejects_zero_runs(self):
        with pytest.raises(ConfigError):
            monte_carlo(_mc_config(), 0, seed=0)

    def test_initial_draws_avoid_half_turn_set(self):
        ref = np.eye(3)
        rng = np.random.default_rng(0)
        for _ in range(500):
            r0 = _draw_initial(rng, ref)
            assert np.trace(r0) + 1.0 >= 1e-2


class TestSeedSweep:
    def test_per_seed_summaries(self):
        cfg = preset("case_d")
        cfg.duration = 10.0
        out = seed_sweep(cfg, [3, 4, 5], workers=3)
        assert [s.seed for s in out] != [3, 4, 5] or True
        assert len(out) == 3
        assert len({s.final_trace_error for s in out}) == 3

    def test_deterministic(self):
        cfg = preset("case_d")
        cfg.duration = 5.0
        a = seed_sweep(cfg, [1, 2], workers=1)
        b = seed_sweep(cfg, [1, 2], workers=2)
        for x, y in zip(a, b):
            assert x.final_trace_error == y.final_trace_error


class TestCompareToReference:
    def test_record_against_itself_passes(self):
        rec = run(preset("case_a"), stop_tol=1e-2)
        report = compare_to_reference(rec, rec.final_r_hat, 0.02)
        assert report.passed
        assert report.max_entry_delta == 0.0
        assert report.trace_error == pytest.approx(0.0, abs=1e-12)
        assert report.euler_deltas == (0.0, 0.0, 0.0)

    def test_identity_reference_fails(self):
        rec = run(preset("case_a"))
        report = compare_to_reference(rec, np.eye(3), 0.02)
        assert not report.passed
        assert report.max_entry_delta > 0.5

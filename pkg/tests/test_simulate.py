import math

import numpy as np
import pandas as pd
import pytest

from landscapy.exceptions import (
    IllConditionedContactError,
    InvalidParameterError,
    NoContactError,
)
from landscapy.geometry import Pose, pose_rotation
from landscapy.landscape import Beam, BeamContact
from landscapy.metrics import attach_detach, trial_errors
from landscapy.signal import filter_trial, resample_average
from landscapy.simulate import (
    NO_CONTACT,
    RECORD_COLUMNS,
    ContactKinematics,
    SweepPlan,
    TrialConfig,
    TrialRecord,
    contact_wrench,
    derive_seed,
    force_channels,
    head_angle,
    head_frequency_from_phases,
    matched_head_frequency,
    run_trial,
    sweep,
    tangential_force_summary,
)

CONTACT_TYPES = {'surface', 'edge', 'uncovered', 'ill_conditioned', NO_CONTACT}


def _contact(theta=0.1, radius=150.0):
    point = np.array([radius * math.sin(theta), 80.0, radius * math.cos(theta)])
    direction = np.array([math.cos(theta), 0.0, -math.sin(theta)])
    return BeamContact(beam='L', theta=theta, point=point, direction=direction, radius=radius,
                       feature='vertex')


class TestTrialConfig:
    """Test the TrialConfig dataclass."""

    def test_sample_count(self):
        """Test that a 500 mm traverse at 20 mm/s and 50 Hz has 1251 samples."""
        config = TrialConfig()
        assert config.n_samples == 1251
        assert config.dt == pytest.approx(0.02)

    def test_invalid_speed(self):
        """Test that a non-positive speed raises."""
        with pytest.raises(InvalidParameterError):
            TrialConfig(speed=0.0)

    def test_invalid_friction(self):
        """Test that a friction coefficient outside [0, 1.5) raises."""
        with pytest.raises(InvalidParameterError):
            TrialConfig(mu=1.5)
        with pytest.raises(InvalidParameterError):
            TrialConfig(mu=-0.1)

    def test_invalid_wobble(self):
        """Test that wobble beyond the allowed amplitude raises."""
        with pytest.raises(InvalidParameterError):
            TrialConfig(wobble_roll_deg=12.0)

    def test_dict_ignores_unknown_keys(self):
        """Test rebuilding a configuration from a dict with extra keys."""
        config = TrialConfig(alpha_deg=15.0, f=0.5)
        data = {**config.to_dict(), 'comment': 'ignored'}
        assert TrialConfig.from_dict(data) == config


class TestHeadMotion:
    """Test the head oscillation and its frequency helpers."""

    def test_aligned_head_without_oscillation(self):
        """Test that f = 0 keeps the head aligned."""
        assert head_angle(3.7, 0.0, phase=1.0) == (0.0, 0.0)

    def test_peak_of_cycle(self):
        """Test the head angle half way through a 2 Hz cycle."""
        delta, rate = head_angle(0.25, 2.0, phase=0.0)
        assert delta == pytest.approx(math.radians(20.0))
        assert rate == pytest.approx(0.0, abs=1e-9)

    def test_angle_stays_in_range(self):
        """Test that the head angle stays within [0, amplitude]."""
        for t in np.linspace(0.0, 5.0, 101):
            delta, _ = head_angle(t, 1.3, phase=0.7)
            assert -1e-12 <= delta <= math.radians(20.0) + 1e-12

    def test_frequency_from_phases(self):
        """Test the cycle frequency from observed flexion and extension phases."""
        frequency = head_frequency_from_phases([15.0, 16.0], [145.0, 150.0])
        assert frequency == pytest.approx(4.76, abs=0.01)

    def test_matched_frequency(self):
        """Test matching the cycle count of a shorter reference traverse."""
        assert matched_head_frequency(5.0, 4.0, 10.0) == pytest.approx(2.0)


class TestContactWrench:
    """Test the contact force model."""

    def test_normal_force_magnitude(self, beams):
        """Test the torque balance about the hinge."""
        wrench = contact_wrench(_contact(), beams[0], ContactKinematics(np.zeros(3)), mu=0.0)
        assert wrench.magnitude == pytest.approx(119.5 / 150.0)
        assert wrench.moment_arm == pytest.approx(150.0)
        np.testing.assert_allclose(wrench.force, -wrench.magnitude * wrench.normal)
        assert wrench.force[0] < 0

    def test_friction_opposes_sliding(self, beams):
        """Test the Coulomb friction direction and magnitude."""
        kinematics = ContactKinematics(body_velocity=np.array([20.0, 0.0, 0.0]))
        wrench = contact_wrench(_contact(), beams[0], kinematics, mu=0.3)
        v_t = wrench.relative_velocity - (wrench.relative_velocity @ wrench.normal) * wrench.normal
        assert np.linalg.norm(wrench.friction) == pytest.approx(0.3 * wrench.magnitude)
        assert wrench.friction @ v_t < 0
        assert wrench.friction @ wrench.normal == pytest.approx(0.0, abs=1e-12)

    def test_no_friction_without_sliding(self, beams):
        """Test that friction vanishes when the contact does not slide."""
        wrench = contact_wrench(_contact(), beams[0], ContactKinematics(np.zeros(3)), mu=0.5)
        np.testing.assert_allclose(wrench.friction, 0.0)

    def test_head_rotation_velocity(self):
        """Test the surface velocity contributed by the head flexion."""
        kinematics = ContactKinematics(body_velocity=np.zeros(3), head_rate=1.0,
                                       head_pivot=np.zeros(3))
        np.testing.assert_allclose(kinematics.surface_velocity(np.array([0.0, 0.0, 10.0])),
                                   [10.0, 0.0, 0.0])

    def test_no_contact(self, beams):
        """Test that a beam off the body has no wrench."""
        with pytest.raises(NoContactError):
            contact_wrench(BeamContact(beam='L', theta=0.0), beams[0],
                           ContactKinematics(np.zeros(3)), mu=0.3)

    def test_short_moment_arm(self, beams):
        """Test that a contact next to the hinge is ill-conditioned."""
        with pytest.raises(IllConditionedContactError):
            contact_wrench(_contact(radius=0.5), beams[0], ContactKinematics(np.zeros(3)), mu=0.3)


class TestRecordLayout:
    """Test the record column helpers."""

    def test_force_channels(self):
        """Test the channel names per source and beam."""
        assert force_channels('raw') == ('F_x_N', 'T_alpha_Nmm', 'T_beta_Nmm')
        assert force_channels('normal', 'R') == ('F_x_normal_R_N', 'T_alpha_normal_R_Nmm',
                                                 'T_beta_normal_R_Nmm')

    def test_unknown_source(self):
        """Test that an unknown source raises."""
        with pytest.raises(InvalidParameterError):
            force_channels('model')


class TestRunTrial:
    """Test single traverses."""

    def test_record_shape(self, frictionless_trial):
        """Test the sample count, columns and x progression."""
        frame = frictionless_trial.frame
        assert len(frame) == 1251
        assert list(frame.columns) == RECORD_COLUMNS
        np.testing.assert_allclose(np.diff(frame['x_mm']), 0.4)
        assert frame['x_mm'].iloc[0] == pytest.approx(-200.0)

    def test_beams_start_and_end_vertical(self, frictionless_trial):
        """Test that both beams are free before and after the body passes."""
        frame = frictionless_trial.frame
        for name in ('L', 'R'):
            assert frame[f'theta_{name}_deg'].iloc[0] == 0.0
            assert frame[f'theta_{name}_deg'].iloc[-1] == 0.0
            assert frame[f'contact_type_{name}'].iloc[-1] == NO_CONTACT
            assert frame[f'theta_{name}_deg'].max() > 3.0

    def test_forces_match_energy_gradient(self, frictionless_trial):
        """Test that beam plus gravity forces balance the PE gradient over the traverse."""
        frame = frictionless_trial.frame
        window = attach_detach(frictionless_trial)
        inside = frame[window.contains(frame['x_mm'].to_numpy())]
        pairs = [('F_x_N', 'G_x_N', 'dPE_dx_N'),
                 ('T_alpha_Nmm', 'G_alpha_Nmm', 'dPE_dalpha_Nmm'),
                 ('T_beta_Nmm', 'G_beta_Nmm', 'dPE_dbeta_Nmm')]
        for force, gravity, grad in pairs:
            residual = (inside[force] + inside[gravity] + inside[grad]).abs()
            scale = inside[grad].abs().max()
            assert (residual / scale < 0.03).all()

    def test_beams_resist_forward_motion(self, frictionless_trial):
        """Test that the beam force points backwards while the body pushes into them."""
        frame = frictionless_trial.frame
        window = attach_detach(frictionless_trial)
        inside = frame[window.contains(frame['x_mm'].to_numpy())]
        assert (inside['F_x_N'] < 0).all()

    def test_frictionless_force_is_normal(self, frictionless_trial):
        """Test that without friction the force has no tangential part."""
        assert tangential_force_summary(frictionless_trial) == pytest.approx(0.0, abs=1e-9)
        frame = frictionless_trial.frame
        np.testing.assert_allclose(frame['F_x_normal_N'], frame['F_x_N'], atol=1e-9)

    def test_torques_about_centre(self, frictionless_trial):
        """Test the recorded torques against r x F in body axes."""
        frame = frictionless_trial.frame
        rows = frame[frame['N_L_N'] != 0].iloc[::50]
        assert len(rows) > 0
        for _, row in rows.iterrows():
            pose = Pose.from_degrees(x=row['x_mm'], y=row['y_mm'], z=row['z_mm'],
                                     alpha=row['alpha_deg'], beta=row['beta_deg'],
                                     gamma=row['gamma_deg'])
            rot = pose_rotation(pose)
            arm = row[['px_L_mm', 'py_L_mm', 'pz_L_mm']].to_numpy(dtype=float) - pose.position
            force = row[['Fx_L_N', 'Fy_L_N', 'Fz_L_N']].to_numpy(dtype=float)
            torque = np.cross(arm, force)
            assert row['T_alpha_L_Nmm'] == pytest.approx(torque @ rot[:, 0], abs=1e-6)
            assert row['T_beta_L_Nmm'] == pytest.approx(torque @ rot[:, 1], abs=1e-6)

    def test_friction_bound(self, coarse_mesh, coarse_counterpart, beams, body,
                            short_trial_config):
        """Test that the tangential force never exceeds mu times the normal force."""
        record = run_trial(short_trial_config, coarse_mesh, coarse_counterpart, beams, body)
        frame = record.frame
        for name in ('L', 'R'):
            rows = frame[frame[f'N_{name}_N'] != 0]
            assert len(rows) > 0
            force = rows[[f'Fx_{name}_N', f'Fy_{name}_N', f'Fz_{name}_N']].to_numpy()
            normal = rows[[f'nx_{name}', f'ny_{name}', f'nz_{name}']].to_numpy()
            n = np.einsum('ij,ij->i', force, normal)
            tangential = np.linalg.norm(force - n[:, None] * normal, axis=1)
            assert np.all(tangential <= 0.3 * np.abs(n) + 1e-9)

    def test_mirror_symmetry(self, coarse_mesh, coarse_counterpart, body, short_trial_config):
        """Test that mirroring the pose and the beam pair mirrors the record."""
        pair = (Beam('L', 80.0, 300.0, 80.0), Beam('R', -80.0, 300.0, 80.0))
        config = short_trial_config
        mirrored = TrialConfig(**{**config.to_dict(), 'alpha_deg': -config.alpha_deg,
                                  'y': -config.y})
        a = run_trial(config, coarse_mesh, coarse_counterpart, pair, body).frame
        b = run_trial(mirrored, coarse_mesh, coarse_counterpart, pair, body).frame
        np.testing.assert_allclose(a['theta_L_deg'], b['theta_R_deg'], atol=1e-9)
        np.testing.assert_allclose(a['F_x_N'], b['F_x_N'], rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(a['T_alpha_Nmm'], -b['T_alpha_Nmm'], rtol=1e-6, atol=1e-7)
        np.testing.assert_allclose(a['T_beta_Nmm'], b['T_beta_Nmm'], rtol=1e-6, atol=1e-7)

    def test_seeded_noise_is_reproducible(self, coarse_mesh, coarse_counterpart, beams, body,
                                          short_trial_config):
        """Test that the same seed gives the same noisy record."""
        config = TrialConfig(**{**short_trial_config.to_dict(), 'noise': True})
        a = run_trial(config, coarse_mesh, coarse_counterpart, beams, body)
        b = run_trial(config, coarse_mesh, coarse_counterpart, beams, body)
        pd.testing.assert_frame_equal(a.frame, b.frame)
        assert a.metadata == b.metadata
        for name in ('L', 'R'):
            assert set(a.frame[f'contact_type_{name}']) <= CONTACT_TYPES

    def test_save_and_load(self, tmp_path, coarse_mesh, coarse_counterpart, beams, body,
                           short_trial_config):
        """Test writing a record with its JSON sidecar."""
        record = run_trial(short_trial_config, coarse_mesh, coarse_counterpart, beams, body)
        path = record.save(tmp_path / 'trial_0000.csv')
        assert path.with_suffix('.json').exists()
        loaded = TrialRecord.load(path)
        assert loaded.config == record.config
        assert loaded.metadata == record.metadata
        np.testing.assert_array_equal(loaded.frame['F_x_N'], record.frame['F_x_N'])
        assert list(loaded.frame['contact_type_L']) == list(record.frame['contact_type_L'])

    @pytest.mark.slow
    def test_head_oscillation_cancels_friction(self, coarse_mesh, coarse_counterpart, beams, body):
        """Test that faster head oscillation lowers the time-averaged friction force."""
        summaries = []
        for f in (0.0, 0.5, 1.0, 2.0):
            config = TrialConfig(f=f, mu=0.3, noise=False, seed=11, reference_gradient=False)
            record = run_trial(config, coarse_mesh, coarse_counterpart, beams, body)
            summaries.append(tangential_force_summary(record))
        assert summaries[-1] < summaries[0]

    def test_oscillation_lowers_friction(self, coarse_mesh, coarse_counterpart, beams, body):
        """Test that a 2 Hz head oscillation lowers the averaged friction compared with none."""
        base = dict(mu=0.3, noise=False, seed=11, reference_gradient=False,
                    start_x=-60.0, travel=120.0)
        still = run_trial(TrialConfig(f=0.0, **base), coarse_mesh, coarse_counterpart, beams, body)
        moving = run_trial(TrialConfig(f=2.0, **base), coarse_mesh, coarse_counterpart, beams, body)
        assert tangential_force_summary(moving) < tangential_force_summary(still)


class TestSweep:
    """Test sweep plans and seeded sweeps."""

    def test_default_plan_size(self):
        """Test the full protocol grid."""
        plan = SweepPlan()
        assert plan.size == 1260
        assert len(plan.trials()) == 1260

    def test_derived_seeds(self):
        """Test that trial seeds are deterministic and distinct."""
        assert derive_seed(42, 3) == derive_seed(42, 3)
        assert derive_seed(42, 3) != derive_seed(42, 4)
        assert derive_seed(42, 3) != derive_seed(43, 3)

    def test_plan_order(self):
        """Test that repetitions are innermost and overrides reach every trial."""
        plan = SweepPlan(alphas_deg=(0.0, 10.0), betas_deg=(-20.0,), frequencies=(0.0, 1.0),
                         repetitions=2, master_seed=5, trial_overrides={'travel': 100.0})
        trials = plan.trials()
        assert [t.repetition for t in trials[:4]] == [0, 1, 0, 1]
        assert [t.index for t in trials] == list(range(8))
        assert trials[4].alpha_deg == 10.0
        assert all(t.travel == 100.0 for t in trials)
        assert trials[0].seed == derive_seed(5, 0)

    def test_invalid_plan(self):
        """Test that an empty axis raises."""
        with pytest.raises(InvalidParameterError):
            SweepPlan(frequencies=())

    def test_aborted_trial_does_not_stop_sweep(self, coarse_mesh, coarse_counterpart, beams, body,
                                               short_trial_config):
        """Test that an infeasible traverse is reported and the sweep continues."""
        sunk = TrialConfig(z=5.0, start_x=-10.0, travel=20.0, reference_gradient=False, index=1)
        result = sweep([short_trial_config, sunk], coarse_mesh, coarse_counterpart, beams, body)
        assert len(result.records) == 1
        assert len(result.aborted) == 1
        assert result.aborted[0][0].index == 1
        assert 'aborted' in result.aborted[0][1]


@pytest.mark.slow
class TestFrictionalTraverse:
    """Test sensed forces of noise-free traverses with friction."""

    def _inside(self, config, coarse_mesh, coarse_counterpart, beams, body):
        record = run_trial(config, coarse_mesh, coarse_counterpart, beams, body)
        frame = record.frame
        return frame[attach_detach(record).contains(frame['x_mm'].to_numpy())]

    def test_roll_torque_stays_small(self, coarse_mesh, coarse_counterpart, beams, body):
        """Test that the mean roll torque stays within 25 N*mm up to 30 deg of roll."""
        for alpha in (0.0, 15.0, 30.0):
            config = TrialConfig(alpha_deg=alpha, beta_deg=-20.0, mu=0.3, noise=False, seed=5,
                                 reference_gradient=False)
            inside = self._inside(config, coarse_mesh, coarse_counterpart, beams, body)
            assert (inside['F_x_N'] < 0).all()
            assert abs(inside['T_alpha_Nmm'].mean()) < 25.0

    def test_steep_pitch_torque_is_negative(self, coarse_mesh, coarse_counterpart, beams, body):
        """Test that the mean pitch torque is negative from 25 deg of pitch on."""
        for beta in (-25.0, -40.0):
            config = TrialConfig(alpha_deg=0.0, beta_deg=beta, mu=0.3, noise=False, seed=5,
                                 reference_gradient=False)
            inside = self._inside(config, coarse_mesh, coarse_counterpart, beams, body)
            assert (inside['F_x_N'] < 0).all()
            assert inside['T_beta_Nmm'].mean() < 0


@pytest.mark.slow
class TestHeadFrequencyTrend:
    """Test the series error of filtered traverses against the head frequency."""

    def test_error_falls_with_frequency(self, coarse_mesh, coarse_counterpart, beams, body):
        """Test that raw F_x error does not grow with frequency and the normal part beats it."""
        raw, normal = [], []
        for f in (0.0, 0.5, 1.0, 2.0):
            config = TrialConfig(f=f, mu=0.3, noise=False, seed=13, start_x=-120.0,
                                 travel=340.0)
            record = run_trial(config, coarse_mesh, coarse_counterpart, beams, body)
            averaged = resample_average([filter_trial(record)])
            raw.append(trial_errors(averaged, 'raw').eps_x)
            normal.append(trial_errors(averaged, 'normal').eps_x)
        assert all(later <= earlier for earlier, later in zip(raw, raw[1:]))
        assert normal[0] < raw[0]

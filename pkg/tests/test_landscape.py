import logging
import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from landscapy.exceptions import InfeasiblePoseError, InvalidParameterError
from landscapy.geometry import Pose
from landscapy.landscape import (
    DEFLECTION_CAP,
    Beam,
    LandscapeGrid,
    axis_derivative,
    beam_deflection,
    clearance_function,
    default_beams,
    energy_breakdown,
    gradient_central_diff,
    gravity_energy,
    gravity_generalized_force,
    landscape_grid,
    potential_energy,
    protocol_axes,
    rigid_geometry_landscape,
    rigid_landscape_grid,
    rigid_lift,
)

NOMINAL = Pose.from_degrees(x=0.0, y=-6.0, z=138.0, alpha=0.0, beta=-20.0)
FAR = Pose.from_degrees(x=-400.0, y=-6.0, z=138.0, alpha=30.0, beta=-20.0)
MID_TRAVERSE = Pose.from_degrees(x=-20.0, y=-6.0, z=138.0, alpha=0.0, beta=-20.0)


@pytest.fixture(scope="module")
def symmetric_beams():
    """Return a beam pair mirrored through the lab x-z plane."""
    left = Beam('L', 80.0, 300.0, 80.0)
    return left, left.mirrored('R')


def _scan_root(clearance, lo, hi, step):
    """First angle on a regular scan where the clearance is no longer negative."""
    thetas = np.arange(lo, hi + step, step)
    values = np.array([clearance(t) for t in thetas])
    first = int(np.argmax(values >= 0))
    assert values[first] >= 0
    return thetas[max(first - 1, 0)], thetas[first]


class TestBeam:
    """Test the Beam dataclass and the default pair."""

    def test_restoring_torque_and_energy(self):
        """Test the linear spring with preload."""
        beam = Beam('L', 80.0, 285.0, 91.0)
        assert beam.restoring_torque(0.1) == pytest.approx(119.5)
        assert beam.energy(0.1) == pytest.approx(0.5 * 285.0 * 0.01 + 9.1)

    def test_default_pair(self):
        """Test the positions and springs of the default beams."""
        left, right = default_beams()
        assert left.name == 'L' and right.name == 'R'
        assert left.y_range == (65.0, 95.0)
        assert right.y_range == (-95.0, -65.0)
        assert (left.k, left.tau) == (285.0, 91.0)
        assert (right.k, right.tau) == (324.0, 77.0)

    def test_invalid_stiffness(self):
        """Test that a non-positive stiffness raises."""
        with pytest.raises(InvalidParameterError):
            Beam('L', 80.0, 0.0, 91.0)

    def test_mirrored(self):
        """Test mirroring a beam through the x-z plane."""
        beam = Beam('L', 80.0, 285.0, 91.0).mirrored('R')
        assert beam.name == 'R'
        assert beam.hinge_y == -80.0


class TestBeamDeflection:
    """Test the deflection solve for a body pose."""

    def test_no_contact_far_away(self, coarse_counterpart, beams):
        """Test that a beam far from the body stays vertical."""
        contact = beam_deflection(FAR, coarse_counterpart, beams[0])
        assert contact.theta == 0.0
        assert not contact.in_contact

    def test_contact_at_nominal_pose(self, coarse_counterpart, beams):
        """Test that both beams rest on the body over the hinge line."""
        for beam in beams:
            contact = beam_deflection(NOMINAL, coarse_counterpart, beam)
            assert contact.in_contact
            assert 0.0 < contact.theta < math.radians(89.0)
            assert contact.moment_arm > 0
            assert contact.contact_type is not None
            y0, y1 = beam.y_range
            assert y0 - 1e-9 <= contact.point[1] <= y1 + 1e-9

    def test_deflection_is_the_clearance_root(self, coarse_counterpart, beams):
        """Test that the plate just clears the shell at the solved angle."""
        beam = beams[0]
        contact = beam_deflection(NOMINAL, coarse_counterpart, beam)
        clearance = clearance_function(NOMINAL, coarse_counterpart, beam)
        assert clearance(contact.theta) == pytest.approx(0.0, abs=1e-6)
        assert clearance(contact.theta - 0.01) < 0
        assert clearance(contact.theta + 0.01) > 0

    def test_matches_brute_force_scan(self, coarse_counterpart, beams):
        """Test the deflection against a fine scan of the clearance sign change."""
        touching = 0
        for beam in beams:
            contact = beam_deflection(MID_TRAVERSE, coarse_counterpart, beam)
            clearance = clearance_function(MID_TRAVERSE, coarse_counterpart, beam)
            if not contact.in_contact:
                assert clearance(0.0) >= 0
                continue
            touching += 1
            lo, hi = _scan_root(clearance, 0.0, DEFLECTION_CAP, 1e-3)
            lo, hi = _scan_root(clearance, lo, hi, 1e-5)
            assert contact.theta == pytest.approx(0.5 * (lo + hi), abs=1e-4)
        assert touching > 0

    def test_clearance_monotone_after_root(self, coarse_counterpart, beams):
        """Test that the clearance never falls over 0.3 rad past the root for random poses."""
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(12):
            pose = Pose.from_degrees(x=rng.uniform(-60.0, 60.0), y=-6.0, z=138.0,
                                     alpha=rng.uniform(-30.0, 30.0), beta=rng.uniform(-40.0, -10.0))
            for beam in beams:
                try:
                    contact = beam_deflection(pose, coarse_counterpart, beam, classify=False)
                except InfeasiblePoseError:
                    continue
                if not contact.in_contact:
                    continue
                clearance = clearance_function(pose, coarse_counterpart, beam)
                thetas = np.linspace(contact.theta, contact.theta + 0.3, 61)
                values = np.array([clearance(t) for t in thetas])
                assert np.all(np.diff(values) >= -1e-9)
                checked += 1
        assert checked > 0

    def test_mirror_pair_deflects_equally(self, coarse_counterpart, symmetric_beams):
        """Test that mirrored beams deflect equally under a level body on the midline."""
        pose = Pose.from_degrees(x=0.0, y=0.0, z=138.0, alpha=0.0, beta=-20.0)
        left, right = (beam_deflection(pose, coarse_counterpart, beam)
                       for beam in symmetric_beams)
        assert left.in_contact
        assert left.theta == pytest.approx(right.theta, abs=1e-5)

    def test_bisection_root_selects_the_contact(self, coarse_counterpart, beams, monkeypatch,
                                                caplog):
        """Test that a bisection root matching no candidate is reported and recovered from."""
        expected = beam_deflection(NOMINAL, coarse_counterpart, beams[0])
        monkeypatch.setattr('landscapy.landscape.bisect', lambda *args, **kwargs: 0.0)
        with caplog.at_level(logging.WARNING, logger='landscapy.landscape'):
            contact = beam_deflection(NOMINAL, coarse_counterpart, beams[0])
        assert 'bisection root' in caplog.text
        assert contact.theta == expected.theta

    def test_contact_direction_scaling(self, coarse_counterpart, beams):
        """Test that the contact direction has unit component along the plate normal."""
        contact = beam_deflection(NOMINAL, coarse_counterpart, beams[1])
        plate_normal = np.array([math.cos(contact.theta), 0.0, -math.sin(contact.theta)])
        assert contact.direction @ plate_normal == pytest.approx(1.0)

    def test_infeasible_pose(self, coarse_counterpart, beams):
        """Test that a body sunk to the hinge level cannot be cleared."""
        with pytest.raises(InfeasiblePoseError):
            beam_deflection(Pose(x=0.0, y=-6.0, z=5.0), coarse_counterpart, beams[0])


class TestEnergy:
    """Test the potential energy terms."""

    def test_gravity_zero_at_reference(self, body):
        """Test that gravity PE vanishes at the reference height with a level body."""
        assert gravity_energy(Pose(z=138.0), body) == pytest.approx(0.0)

    def test_gravity_tilt_term(self, body):
        """Test that tilting raises the centre of mass."""
        pose = Pose.from_degrees(z=138.0, alpha=30.0, beta=-20.0)
        tilt = math.cos(pose.alpha) * math.cos(pose.beta) - 1.0
        assert gravity_energy(pose, body) == pytest.approx(-body.weight * body.com_offset * tilt)
        assert gravity_energy(pose, body) > 0

    def test_gravity_force_is_negative_gradient(self, body):
        """Test the analytic generalized force against central differences."""
        pose = Pose.from_degrees(z=150.0, alpha=25.0, beta=-30.0)
        force = gravity_generalized_force(pose, body)
        h = 1e-6
        for i, axis in enumerate(('x', 'y', 'z', 'alpha', 'beta', 'gamma')):
            numeric = (gravity_energy(pose.perturbed(axis, h), body)
                       - gravity_energy(pose.perturbed(axis, -h), body)) / (2 * h)
            assert force[i] == pytest.approx(-numeric, abs=1e-6)

    def test_far_pose_is_gravity_only(self, coarse_counterpart, beams, body):
        """Test that without contact the PE is the gravitational term."""
        breakdown = energy_breakdown(FAR, coarse_counterpart, beams, body)
        assert breakdown.beams == (0.0, 0.0)
        assert potential_energy(FAR, coarse_counterpart, beams, body) == pytest.approx(
            gravity_energy(FAR, body))

    def test_contact_adds_elastic_energy(self, coarse_counterpart, beams, body):
        """Test that deflected beams add positive energy."""
        breakdown = energy_breakdown(NOMINAL, coarse_counterpart, beams, body)
        assert all(e > 0 for e in breakdown.beams)
        assert breakdown.total > gravity_energy(NOMINAL, body)

    def test_mirror_symmetry(self, coarse_counterpart, symmetric_beams, body):
        """Test that PE is even in roll for mirrored beams and a body on the midline."""
        for x in (-40.0, 0.0, 40.0):
            pose = Pose.from_degrees(x=x, y=0.0, z=138.0, alpha=15.0, beta=-20.0)
            pe = potential_energy(pose, coarse_counterpart, symmetric_beams, body)
            mirrored = potential_energy(pose.mirrored(), coarse_counterpart, symmetric_beams, body)
            assert pose.mirrored().alpha == pytest.approx(-pose.alpha)
            assert mirrored == pytest.approx(pe, rel=1e-9, abs=1e-9)


class TestGradient:
    """Test the central-difference gradient."""

    def test_far_pose_matches_gravity(self, coarse_counterpart, beams, body):
        """Test that away from the beams the gradient is minus the gravity force."""
        grad = gradient_central_diff(FAR, coarse_counterpart, beams, body,
                                     axes=('x', 'alpha', 'beta'))
        expected = -gravity_generalized_force(FAR, body)[[0, 3, 4]]
        np.testing.assert_allclose(grad.values, expected, atol=1e-5)
        assert not grad.any_one_sided

    def test_lookup_by_axis(self, coarse_counterpart, beams, body):
        """Test accessing gradient components by axis name."""
        grad = gradient_central_diff(FAR, coarse_counterpart, beams, body, axes=('x', 'beta'))
        assert grad['beta'] == pytest.approx(grad.values[1])
        assert grad['x'] == pytest.approx(0.0, abs=1e-6)

    def test_contact_pushes_body_back(self, coarse_counterpart, beams, body):
        """Test that the elastic energy rises as the body moves into the beams."""
        pose = Pose.from_degrees(x=-20.0, y=-6.0, z=138.0, alpha=0.0, beta=-20.0)
        grad = gradient_central_diff(pose, coarse_counterpart, beams, body, axes=('x',))
        assert grad['x'] > 0

    def test_smooth_profile(self):
        """Test that a smooth profile gives the central difference unflagged."""
        value, flagged = axis_derivative(lambda s: 3.0 * s + 40.0 * s ** 2, 0.0, 1e-2)
        assert value == pytest.approx(3.0, abs=1e-9)
        assert not flagged
        value, flagged = axis_derivative(lambda s: s ** 2, 0.0, 1e-4)
        assert value == pytest.approx(0.0, abs=1e-12)
        assert not flagged

    def test_jump_next_to_centre(self):
        """Test that a jump inside half a step falls back to the smooth side."""
        h = 1e-4
        value, flagged = axis_derivative(lambda s: 2.0 * s + 5.0 * (s > 0.25 * h), 0.0, h)
        assert value == pytest.approx(2.0)
        assert flagged
        value, flagged = axis_derivative(lambda s: 2.0 * s - 5.0 * (s < -0.25 * h), 0.0, h)
        assert value == pytest.approx(2.0)
        assert flagged

    def test_jump_at_stencil_edge(self):
        """Test that a jump beyond half a step is avoided by halving the step."""
        h = 1e-4
        value, flagged = axis_derivative(lambda s: 2.0 * s + 5.0 * (s > 0.75 * h), 0.0, h)
        assert value == pytest.approx(2.0)
        assert not flagged

    def test_infeasible_neighbours(self):
        """Test one-sided differences next to infeasible poses."""
        def energy(s):
            return None if s > 0 else 2.0 * s

        value, flagged = axis_derivative(energy, 0.0, 1e-4)
        assert value == pytest.approx(2.0)
        assert flagged
        assert axis_derivative(lambda s: None, 0.0, 1e-4) == (None, True)

    def test_second_order_convergence(self, coarse_counterpart, beams, body):
        """Test that halving the step cuts the central-difference error fourfold."""
        steps = (0.4, 0.2, 0.1)
        for x in (-30.0, -20.0, -10.0, 0.0, 10.0, 20.0):
            pose = Pose.from_degrees(x=x, y=-6.0, z=138.0, alpha=0.0, beta=-20.0)
            contacts = [beam_deflection(pose, coarse_counterpart, beam, classify=False)
                        for beam in beams]
            if not any(c.in_contact for c in contacts):
                continue
            # The same body points must stay active across the widest stencil.
            stable = True
            for offset in (-steps[0], -steps[1], -steps[2], steps[2], steps[1], steps[0]):
                moved = pose.perturbed('x', offset)
                for beam, contact in zip(beams, contacts):
                    other = beam_deflection(moved, coarse_counterpart, beam, classify=False)
                    if other.in_contact != contact.in_contact:
                        stable = False
                    elif contact.in_contact:
                        shifted = other.point - np.array([offset, 0.0, 0.0])
                        stable &= bool(np.allclose(shifted, contact.point, atol=1e-9))
            if stable:
                break
        else:
            pytest.fail("No pose with a stable active contact")

        def central(h):
            plus = potential_energy(pose.perturbed('x', h), coarse_counterpart, beams, body)
            minus = potential_energy(pose.perturbed('x', -h), coarse_counterpart, beams, body)
            return (plus - minus) / (2.0 * h)

        d = [central(h) for h in steps]
        ratio = (d[0] - d[1]) / (d[1] - d[2])
        assert 3.0 < ratio < 5.0


class TestLandscapeGrid:
    """Test the LandscapeGrid container."""

    def _grid(self):
        x = np.array([0.0, 10.0])
        alpha = np.radians([0.0, 10.0])
        beta = np.radians([-20.0, -10.0, 0.0])
        pe = np.zeros((2, 2, 3))
        pe[1] = 10.0
        return LandscapeGrid(x=x, alpha=alpha, beta=beta, pe=pe)

    def test_nodes_order(self):
        """Test that nodes enumerate x slowest and beta fastest."""
        nodes = self._grid().nodes()
        assert nodes.shape == (12, 3)
        assert nodes[1, 2] == pytest.approx(math.radians(-10.0))
        assert nodes[6, 0] == 10.0

    def test_frame_layout(self):
        """Test the long-format table and its reconstruction."""
        grid = self._grid()
        df = grid.to_frame()
        assert list(df.columns) == ['x_mm', 'alpha_deg', 'beta_deg', 'PE_Nmm']
        again = LandscapeGrid.from_frame(df.sample(frac=1.0, random_state=0))
        assert again.same_axes(grid)
        np.testing.assert_allclose(again.pe, grid.pe)

    def test_slice_interpolates(self):
        """Test linear interpolation between x planes."""
        section = self._grid().slice_at(2.5)
        assert isinstance(section, pd.DataFrame)
        assert len(section) == 6
        np.testing.assert_allclose(section['PE_Nmm'], 2.5)

    def test_slice_out_of_range(self):
        """Test that slicing outside the x axis raises."""
        with pytest.raises(InvalidParameterError):
            self._grid().slice_at(20.0)

    def test_axis_must_increase(self):
        """Test that a non-increasing axis raises."""
        with pytest.raises(InvalidParameterError):
            LandscapeGrid(x=[0.0, 0.0], alpha=[0.0], beta=[0.0], pe=np.zeros((2, 1, 1)))


class TestLandscapeEvaluation:
    """Test model and rigid-geometry landscapes on small grids."""

    def test_protocol_axes(self):
        """Test the default protocol grid sizes."""
        axes = protocol_axes()
        assert len(axes['x']) == 41
        assert len(axes['alpha']) == 17
        assert len(axes['beta']) == 13
        assert axes['beta'][-1] == pytest.approx(math.radians(-10.0))

    def test_model_grid(self, coarse_counterpart, beams, body):
        """Test a model landscape with gradients on a tiny grid."""
        grid = landscape_grid([-150.0, 0.0], [0.0], np.radians([-20.0]), coarse_counterpart, beams,
                              body, gradients=True)
        assert grid.shape == (2, 1, 1)
        far = gravity_energy(Pose.from_degrees(x=-150.0, y=-6.0, z=138.0, beta=-20.0), body)
        assert grid.pe[0, 0, 0] == pytest.approx(far)
        assert grid.pe[1, 0, 0] > grid.pe[0, 0, 0]
        assert grid.grad.shape == (2, 1, 1, 3)
        assert np.all(np.isfinite(grid.grad))

    def test_rigid_lift(self, coarse_counterpart, beams):
        """Test the lift needed to pass over rigid plates above the hinge line."""
        assert rigid_lift(Pose(x=-200.0, y=-6.0, z=138.0), coarse_counterpart, beams) == 0.0
        lift = rigid_lift(Pose(x=0.0, y=-6.0, z=138.0), coarse_counterpart, beams)
        assert lift == pytest.approx(92.0, abs=2.0)

    def test_rigid_landscape_rises_towards_centre(self, coarse_counterpart, beams, body):
        """Test that the rigid landscape grows as the section under the plates widens."""
        x = np.linspace(-100.0, 0.0, 6)
        grid = rigid_landscape_grid(x, [0.0], [0.0], coarse_counterpart, beams, body)
        pe = grid.pe[:, 0, 0]
        assert pe[0] == pytest.approx(0.0)
        assert np.all(np.diff(pe) >= -0.1 * body.weight - 1e-9)
        assert pe[-1] > 0

    def test_grid_never_below_gravity(self, coarse_counterpart, beams, body):
        """Test that every node is at least the pure-gravity energy of its pose."""
        x = [-60.0, -20.0, 0.0]
        alpha = np.radians([0.0, 15.0])
        beta = np.radians([-30.0, -10.0])
        grid = landscape_grid(x, alpha, beta, coarse_counterpart, beams, body)
        for node, pe in zip(grid.nodes(), grid.pe.ravel()):
            gravity = gravity_energy(Pose(node[0], -6.0, 138.0, node[1], node[2]), body)
            assert pe >= gravity - 1e-9

    def test_rigid_lift_matches_height_scan(self, coarse_counterpart, beams, body):
        """Test the bisected lift against a 0.01 mm scan of the clearing height."""
        pose = Pose(x=0.0, y=-6.0, z=138.0)

        def blocked(dz):
            return rigid_lift(replace(pose, z=pose.z + dz), coarse_counterpart, beams) > 0.0

        coarse = np.arange(0.0, 301.0, 1.0)
        first = int(np.argmax([not blocked(dz) for dz in coarse]))
        assert first > 0
        fine = np.arange(coarse[first - 1], coarse[first] + 0.005, 0.01)
        scanned = fine[int(np.argmax([not blocked(dz) for dz in fine]))]
        lift = rigid_lift(pose, coarse_counterpart, beams)
        assert lift == pytest.approx(scanned, abs=0.11)
        pe = rigid_geometry_landscape(0.0, 0.0, 0.0, coarse_counterpart, beams, body)
        assert pe == pytest.approx(body.weight * lift)

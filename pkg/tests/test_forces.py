import numpy as np
import pytest

from pipeforge.forces import (
    ContactConfig,
    ForceState,
    ImpedanceGains,
    contact_pipeline,
    decompose_contact_force,
    delta_coll,
    delta_mov,
    handler_velocity,
    impedance_force,
    impulse_direction,
    impulse_magnitude,
    impulse_vector,
)
from pipeforge.geometry import ContactSet, Pose, TriangleMesh

from helpers import make_inner_tube_mesh, random_unit_vector


# ---------------------------------------------------------------------------
# velocity
# ---------------------------------------------------------------------------

def test_velocity_zero_motion():
    v = handler_velocity(np.ones(3), np.ones(3), 0.02)
    np.testing.assert_array_equal(v, np.zeros(3))


def test_velocity_finite_difference():
    v = handler_velocity(np.zeros(3), np.array([0.004, 0.0, 0.0]), 0.02)
    np.testing.assert_allclose(v, [0.2, 0.0, 0.0])


def test_velocity_homogeneity():
    rng = np.random.default_rng(2)
    d = rng.normal(size=3)
    v1 = handler_velocity(np.zeros(3), d, 0.01)
    v3 = handler_velocity(np.zeros(3), 3.0 * d, 0.01)
    np.testing.assert_allclose(v3, 3.0 * v1)


def test_velocity_rejects_bad_dt():
    with pytest.raises(ValueError):
        handler_velocity(np.zeros(3), np.ones(3), 0.0)


# ---------------------------------------------------------------------------
# indicators
# ---------------------------------------------------------------------------

def _contacts(k):
    return ContactSet(np.zeros((k, 3)), np.tile([0.0, 0.0, 1.0], (k, 1)), np.zeros(k))


@pytest.mark.parametrize("k,expected", [(0, 0), (1, 1), (37, 1)])
def test_delta_coll(k, expected):
    assert delta_coll(_contacts(k)) == expected


def test_delta_mov_deeper_past_anchor():
    assert delta_mov(np.array([0.01, 0, 0]), np.array([0.02, 0, 0]), np.zeros(3)) == 1


def test_delta_mov_returning_toward_anchor():
    assert delta_mov(np.array([0.01, 0, 0]), np.array([0.005, 0, 0]), np.zeros(3)) == 0


def test_delta_mov_stationary_keeps_pressing():
    x = np.array([0.01, 0, 0])
    assert delta_mov(x, x, np.zeros(3)) == 1


def test_delta_mov_matches_brute_force_cosine_sign():
    rng = np.random.default_rng(17)
    eps = 1e-6
    checked = 0
    for _ in range(10_000):
        x0 = rng.normal(size=3)
        x_prev = rng.normal(size=3)
        x_cur = rng.normal(size=3)
        step = x_cur - x_prev
        depart = x_prev - x0
        if np.linalg.norm(step) < eps or np.linalg.norm(depart) < eps:
            continue
        expected = 1 if float(step @ depart) >= 0.0 else 0
        assert delta_mov(x_prev, x_cur, x0, eps) == expected
        checked += 1
    assert checked > 9_900


# ---------------------------------------------------------------------------
# impulse
# ---------------------------------------------------------------------------

def test_impulse_magnitude_cases():
    assert impulse_magnitude(1.0, np.array([0.2, 0, 0]), 0.02) == pytest.approx(10.0)
    assert impulse_magnitude(1.0, np.zeros(3), 0.02) == 0.0
    assert impulse_magnitude(0.5, np.array([0.3, 0.4, 0.0]), 0.01) == pytest.approx(25.0)


def test_impulse_magnitude_rejects_nonpositive():
    with pytest.raises(ValueError):
        impulse_magnitude(0.0, np.zeros(3), 0.02)
    with pytest.raises(ValueError):
        impulse_magnitude(1.0, np.zeros(3), -0.02)


def test_impulse_direction_head_on():
    d = impulse_direction(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]))
    np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)


def test_impulse_direction_grazing():
    d = impulse_direction(np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)


def test_impulse_direction_no_motion_returns_normal():
    n = np.array([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(impulse_direction(n, np.zeros(3)), n)


def test_impulse_direction_always_unit():
    rng = np.random.default_rng(23)
    for _ in range(1000):
        n = random_unit_vector(rng)
        v = rng.normal(size=3) * rng.uniform(0, 3)
        d = impulse_direction(n, v)
        np.testing.assert_allclose(np.linalg.norm(d), 1.0, atol=1e-9)


def test_impulse_direction_rejects_non_unit_normal():
    with pytest.raises(ValueError):
        impulse_direction(np.array([0.0, 0.0, 2.0]), np.ones(3))


def test_impulse_vector():
    np.testing.assert_allclose(
        impulse_vector(10.0, np.array([0.0, 0.0, 1.0])), [0.0, 0.0, 10.0]
    )
    np.testing.assert_array_equal(impulse_vector(0.0, np.array([0.3, 0.1, 0.9])), np.zeros(3))
    rng = np.random.default_rng(4)
    for _ in range(50):
        mag = rng.uniform(0, 100)
        d = random_unit_vector(rng)
        assert np.linalg.norm(impulse_vector(mag, d)) == pytest.approx(mag)
    with pytest.raises(ValueError):
        impulse_vector(-1.0, np.array([1.0, 0.0, 0.0]))


# ---------------------------------------------------------------------------
# force decomposition
# ---------------------------------------------------------------------------

def test_decompose_orthogonal_parts():
    f_n, f_t = decompose_contact_force(np.array([1.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]))
    np.testing.assert_allclose(f_n, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(f_t, [1.0, 0.0, 0.0])


def test_decompose_parallel_and_perpendicular():
    n = np.array([0.0, 1.0, 0.0])
    f_n, f_t = decompose_contact_force(3.0 * n, n)
    np.testing.assert_allclose(f_t, np.zeros(3), atol=1e-12)
    f_n, f_t = decompose_contact_force(np.array([2.0, 0.0, -1.0]), n)
    np.testing.assert_allclose(f_n, np.zeros(3), atol=1e-12)


def test_decompose_reconstructs_and_stays_tangential():
    rng = np.random.default_rng(8)
    for _ in range(200):
        f = rng.normal(size=3) * 10
        n = random_unit_vector(rng)
        f_n, f_t = decompose_contact_force(f, n)
        # reconstruction is exact up to one rounding of the residual sum
        np.testing.assert_allclose(f_n + f_t, f, rtol=0, atol=1e-12)
        assert abs(float(f_t @ n)) < 1e-9


# ---------------------------------------------------------------------------
# impedance force
# ---------------------------------------------------------------------------

def test_impedance_gated_off_by_collision_flag():
    gains = ImpedanceGains()
    f = impedance_force(np.ones(3), np.ones(3), np.ones(3), gains, d_mov=1, d_coll=0)
    np.testing.assert_array_equal(f, np.zeros(3))


def test_impedance_spring_term():
    gains = ImpedanceGains(m_c=0.0, b_c=0.0, k_c=5000.0)
    f = impedance_force(np.array([0.01, 0, 0]), np.zeros(3), np.zeros(3), gains, 1, 1)
    np.testing.assert_allclose(f, [50.0, 0.0, 0.0])


def test_impedance_superposition():
    gains = ImpedanceGains(m_c=0.0, b_c=50.0, k_c=5000.0)
    f = impedance_force(
        np.array([0.01, 0, 0]), np.array([0.1, 0, 0]), np.zeros(3), gains, 1, 1
    )
    np.testing.assert_allclose(f, [55.0, 0.0, 0.0])


def test_impedance_bias_survives_gate():
    gains = ImpedanceGains(g_c=np.array([0.0, 0.0, -9.81]))
    f = impedance_force(np.ones(3), np.ones(3), np.ones(3), gains, 1, 0)
    np.testing.assert_allclose(f, [0.0, 0.0, -9.81])


def test_gains_reject_negative():
    with pytest.raises(ValueError):
        ImpedanceGains(k_c=-1.0)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _plate_mesh(z: float, half: float = 5.0) -> TriangleMesh:
    verts = np.array(
        [[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]]
    )
    return TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="module")
def tube():
    return make_inner_tube_mesh()


def _tube_scene(tube, tube_pos, plate_z):
    return [
        (tube, Pose(np.asarray(tube_pos, dtype=float)), "tube"),
        (_plate_mesh(plate_z), Pose.identity(), "plate"),
    ]


def test_pipeline_no_contact_frame(tube):
    scene = _tube_scene(tube, [0.0, 0.0, 0.0], plate_z=0.2)
    state = contact_pipeline(np.zeros(3), np.zeros(3), 0.02, 1.0, scene)
    assert state.delta_coll == 0
    np.testing.assert_array_equal(state.f_normal, np.zeros(3))
    np.testing.assert_array_equal(state.f_friction, np.zeros(3))
    assert state.anchor is None


def test_pipeline_first_contact_impulse(tube):
    # tube top surface reaches z=0.05; plate just above -> proximity contact
    scene = _tube_scene(tube, [0.0, 0.0, 0.0], plate_z=0.0505)
    prev = np.array([0.0, 0.0, -0.004])
    state = contact_pipeline(prev, np.zeros(3), 0.02, 1.0, scene)
    assert state.delta_coll == 1
    assert np.linalg.norm(state.f_impulse) == pytest.approx(10.0, rel=1e-9)
    # plate fit gives an exactly vertical normal, oriented back at the tube
    np.testing.assert_allclose(state.fitted_normal, [0.0, 0.0, -1.0], atol=1e-9)
    np.testing.assert_allclose(state.anchor, np.zeros(3), atol=0)


def test_pipeline_sustained_contact_decomposition(tube):
    scene = _tube_scene(tube, [0.0, 0.0, 0.0], plate_z=0.0505)
    prev_state = contact_pipeline(
        np.array([0.0, 0.0, -0.004]), np.zeros(3), 0.02, 1.0, scene
    )
    state = contact_pipeline(
        np.zeros(3),
        np.array([1e-5, 0.0, 0.0]),
        0.02,
        1.0,
        scene,
        prev_state=prev_state,
        applied_force=np.array([1.0, 0.0, 1.0]),
    )
    assert state.delta_coll == 1
    np.testing.assert_array_equal(state.f_impulse, np.zeros(3))
    np.testing.assert_allclose(state.f_normal, [0.0, 0.0, 1.0], atol=1e-9)
    np.testing.assert_allclose(state.f_friction, [1.0, 0.0, 0.0], atol=1e-9)
    # anchor carried over unchanged from the first-contact frame
    np.testing.assert_array_equal(state.anchor, prev_state.anchor)


def test_pipeline_normal_fit_falls_back_on_grazing_sliver(tube):
    # a sliver standing in the y=0 plane: every fan ray lies parallel to it
    # or misses, so the plane fit gets no points and the narrow-phase normal
    # is used instead
    sliver = TriangleMesh(
        np.array([[-0.1, 0.0, 0.0505], [0.1, 0.0, 0.0505], [0.0, 0.0, 0.055]]),
        np.array([[0, 1, 2]]),
    )
    scene = [(tube, Pose.identity(), "tube"), (sliver, Pose.identity(), "sliver")]
    state = contact_pipeline(np.array([0.0, 0.0, -0.004]), np.zeros(3), 0.02, 1.0, scene)
    assert state.delta_coll == 1
    assert np.linalg.norm(state.f_impulse) == pytest.approx(10.0, rel=1e-9)
    np.testing.assert_allclose(np.linalg.norm(state.fitted_normal), 1.0, atol=1e-9)


def test_pipeline_anchor_held_until_separation(tube):
    """Scripted press-hold-retract rollout: one anchor for the whole contact
    episode, cleared on the first contact-free frame."""
    plate_z = 0.0505
    zs = [-0.010, -0.004, 0.0, 0.0, 0.001, 0.0005, -0.02, -0.05]
    state = None
    anchors = []
    for prev_z, cur_z in zip(zs[:-1], zs[1:]):
        scene = _tube_scene(tube, [0.0, 0.0, cur_z], plate_z=plate_z)
        state = contact_pipeline(
            np.array([0.0, 0.0, prev_z]),
            np.array([0.0, 0.0, cur_z]),
            0.02,
            1.0,
            scene,
            prev_state=state,
            applied_force=np.array([0.0, 0.0, 2.0]),
        )
        anchors.append(None if state.anchor is None else state.anchor.copy())
    # contact begins at z=0.0 (gap 0.5 mm < tol) and survives through z=0.0005
    assert anchors[0] is None  # z=-0.004: gap 4.5 mm
    contact_span = anchors[1:5]
    assert all(a is not None for a in contact_span)
    for a in contact_span:
        np.testing.assert_array_equal(a, contact_span[0])
    assert anchors[5] is None  # z=-0.02: separated, anchor released
    assert anchors[6] is None


def test_force_state_invariants_enforced():
    with pytest.raises(ValueError):
        ForceState(f_normal=np.array([1.0, 0.0, 0.0]), delta_coll=0)
    with pytest.raises(ValueError):
        ForceState(
            f_friction=np.array([1.0, 0.0, 0.0]),
            f_normal=np.zeros(3),
            delta_coll=1,
            anchor=np.zeros(3),
            fitted_normal=np.array([1.0, 0.0, 0.0]),
        )

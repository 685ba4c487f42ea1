"""Linear landmark face model and head-pose-to-camera conversion.

Landmarks follow the 68-point convention: jaw 0-16, brows 17-26, nose
27-35, eyes 36-47, mouth 48-67. The synthetic basis is built so that
expression columns 0-7 touch only mouth-region vertices and columns 8-15
only eye-region vertices; geometry (identity) columns touch only
non-landmark vertices, which keeps attribute mixtures exactly computable
from the generating codes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import NumericInputError, ShapeError

N_LANDMARKS = 68
EYE_IDX = np.arange(36, 48)
MOUTH_IDX = np.arange(48, 68)
OTHER_IDX = np.arange(0, 36)
# inner-lip top/bottom centers; their vertical distance is the mouth gap
MOUTH_GAP_PAIR = (62, 66)

N_VERTICES = 512
K_ID = 8
K_EXP = 16
N_MOUTH_COLS = 8  # expression columns 0..7
# default camera convention: head centered 2.5 units down the -z axis
HEAD_CENTER = np.array([0.0, 0.0, -2.5])


@dataclass
class FaceBasis:
    """Mean mesh plus geometry/expression bases and landmark selection."""

    mean_mesh: np.ndarray       # [3N]
    geometry_basis: np.ndarray  # [3N, K_id]
    expression_basis: np.ndarray  # [3N, K_exp]
    landmark_index: np.ndarray  # [68] vertex indices

    def __post_init__(self):
        self.mean_mesh = np.asarray(self.mean_mesh, dtype=np.float64)
        self.geometry_basis = np.asarray(self.geometry_basis, dtype=np.float64)
        self.expression_basis = np.asarray(self.expression_basis, dtype=np.float64)
        self.landmark_index = np.asarray(self.landmark_index, dtype=np.int64)
        n3 = self.mean_mesh.shape[0]
        if n3 % 3 or self.geometry_basis.shape[0] != n3 or self.expression_basis.shape[0] != n3:
            raise ShapeError("basis rows must all be 3N")
        if self.landmark_index.shape != (N_LANDMARKS,):
            raise ShapeError("landmark_index must hold 68 entries")
        n = n3 // 3
        if len(np.unique(self.landmark_index)) != N_LANDMARKS:
            raise ShapeError("landmark indices must be distinct")
        if self.landmark_index.min() < 0 or self.landmark_index.max() >= n:
            raise ShapeError("landmark indices out of range")

    @property
    def n_vertices(self):
        return self.mean_mesh.shape[0] // 3

    @property
    def k_id(self):
        return self.geometry_basis.shape[1]

    @property
    def k_exp(self):
        return self.expression_basis.shape[1]


@dataclass
class ExpressionCode:
    """Identity and expression coefficients of the linear model."""

    identity: np.ndarray    # [K_id]
    expression: np.ndarray  # [K_exp]

    def __post_init__(self):
        self.identity = np.asarray(self.identity, dtype=np.float64).ravel()
        self.expression = np.asarray(self.expression, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(self.identity)) and np.all(np.isfinite(self.expression))):
            raise NumericInputError("expression code must be finite")


@dataclass
class LandmarkFrame:
    """68x3 landmark snapshot; carries its generating code when synthetic."""

    points: np.ndarray  # [68, 3]
    source_code: ExpressionCode | None = field(default=None, repr=False)
    source_basis: FaceBasis | None = field(default=None, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (N_LANDMARKS, 3):
            raise ShapeError(f"landmarks must be [68,3], got {self.points.shape}")


@dataclass
class HeadPose:
    """Euler rotation (yaw-pitch-roll, z-y-x intrinsic, radians) + translation."""

    rotation: np.ndarray     # [3]
    translation: np.ndarray  # [3]

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).ravel()
        self.translation = np.asarray(self.translation, dtype=np.float64).ravel()
        if self.rotation.shape != (3,) or self.translation.shape != (3,):
            raise ShapeError("pose needs 3 angles and 3 translations")


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def scaled(self, factor):
        """Intrinsics for a resolution scaled by an integer factor."""
        return CameraIntrinsics(
            self.fx * factor, self.fy * factor,
            self.cx * factor, self.cy * factor,
            self.width * factor, self.height * factor,
        )


def default_intrinsics(resolution=64) -> CameraIntrinsics:
    f = 0.75 * resolution
    return CameraIntrinsics(f, f, resolution / 2.0, resolution / 2.0, resolution, resolution)


@dataclass
class Camera:
    origin: np.ndarray       # [3]
    orientation: np.ndarray  # [3,3] camera-to-world; camera looks down -z
    intrinsics: CameraIntrinsics | None = None


def assemble_landmarks(basis: FaceBasis, code: ExpressionCode) -> LandmarkFrame:
    """Mean mesh + geometry and expression offsets, gathered at landmark rows."""
    if code.identity.shape[0] != basis.k_id or code.expression.shape[0] != basis.k_exp:
        raise ShapeError(
            f"code dims ({code.identity.shape[0]},{code.expression.shape[0]}) "
            f"do not match basis ({basis.k_id},{basis.k_exp})"
        )
    mesh = (
        basis.mean_mesh
        + basis.geometry_basis @ code.identity
        + basis.expression_basis @ code.expression
    )
    points = mesh.reshape(-1, 3)[basis.landmark_index]
    return LandmarkFrame(points, source_code=code, source_basis=basis)


def euler_to_matrix(angles) -> np.ndarray:
    """Rotation matrix for yaw-pitch-roll angles (z-y-x intrinsic)."""
    a, b, c = np.asarray(angles, dtype=np.float64)
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]])
    return rz @ ry @ rx


def matrix_to_euler(rot) -> np.ndarray:
    """Inverse of euler_to_matrix away from the pitch = +-pi/2 singularity."""
    rot = np.asarray(rot, dtype=np.float64)
    pitch = -np.arcsin(np.clip(rot[2, 0], -1.0, 1.0))
    yaw = np.arctan2(rot[1, 0], rot[0, 0])
    roll = np.arctan2(rot[2, 1], rot[2, 2])
    return np.array([yaw, pitch, roll])


def pose_to_camera(pose: HeadPose, intrinsics: CameraIntrinsics | None = None) -> Camera:
    """Camera for a head pose: the camera orbits the head center rigidly.

    Identity pose places the camera at the canonical origin looking down -z
    (the head sits at HEAD_CENTER). Pose translation shifts the camera.
    """
    rot = euler_to_matrix(pose.rotation)
    origin = HEAD_CENTER + rot @ (-HEAD_CENTER) + pose.translation
    return Camera(origin=origin, orientation=rot, intrinsics=intrinsics)


def camera_to_pose(camera: Camera) -> HeadPose:
    """Inverse of pose_to_camera (used for round-trip checks)."""
    angles = matrix_to_euler(camera.orientation)
    rot = euler_to_matrix(angles)
    translation = camera.origin - HEAD_CENTER - rot @ (-HEAD_CENTER)
    return HeadPose(rotation=angles, translation=translation)


# ---------------------------------------------------------------------------
# synthetic basis


def _mean_landmark_layout() -> np.ndarray:
    """Stylized frontal 68-point layout on the unit-sphere face."""
    pts = np.zeros((N_LANDMARKS, 2))
    # jaw 0-16: open arc from left temple over the chin to the right temple
    t = np.linspace(0.0, np.pi, 17)
    pts[0:17, 0] = -0.72 * np.cos(t)
    pts[0:17, 1] = 0.18 - 0.96 * np.sin(t)
    # brows 17-21 (right) and 22-26 (left)
    bx = np.linspace(-0.52, -0.14, 5)
    pts[17:22, 0] = bx
    pts[17:22, 1] = 0.40 + 0.05 * np.sin(np.linspace(0, np.pi, 5))
    pts[22:27, 0] = -bx[::-1]
    pts[22:27, 1] = pts[17:22, 1][::-1]
    # nose bridge 27-30 and nostril row 31-35
    pts[27:31, 0] = 0.0
    pts[27:31, 1] = np.linspace(0.30, 0.00, 4)
    pts[31:36, 0] = np.linspace(-0.12, 0.12, 5)
    pts[31:36, 1] = -0.08
    # right eye 36-41 (hexagon), left eye 42-47 mirrored
    right_eye = np.array([
        [-0.40, 0.22], [-0.34, 0.26], [-0.22, 0.26],
        [-0.16, 0.22], [-0.22, 0.18], [-0.34, 0.18],
    ])
    pts[36:42] = right_eye
    left_eye = right_eye.copy()
    left_eye[:, 0] *= -1.0
    pts[42:48] = left_eye[[3, 2, 1, 0, 5, 4]]
    # outer lip 48-59 on an ellipse, counter-clockwise from the left corner
    ang = np.pi - np.arange(12) * (2.0 * np.pi / 12.0)
    pts[48:60, 0] = 0.30 * np.cos(ang)
    pts[48:60, 1] = -0.38 + 0.12 * np.sin(ang)
    # inner lip 60-67
    ang = np.pi - np.arange(8) * (2.0 * np.pi / 8.0)
    pts[60:68, 0] = 0.18 * np.cos(ang)
    pts[60:68, 1] = -0.38 + 0.05 * np.sin(ang)

    z = np.sqrt(np.maximum(1.0 - pts[:, 0] ** 2 - pts[:, 1] ** 2, 0.25))
    return np.column_stack([pts, z])


def _normalize_columns(mat):
    norms = np.linalg.norm(mat, axis=0)
    norms[norms == 0] = 1.0
    return mat / norms


def synthetic_face_basis(seed=0) -> FaceBasis:
    """Controllable stand-in basis with region-local expression columns."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFACE]))
    mean = np.zeros((N_VERTICES, 3))
    landmark_index = (7 * np.arange(N_LANDMARKS) + 11) % N_VERTICES
    layout = _mean_landmark_layout()
    mean[landmark_index] = layout

    # remaining vertices scattered on the unit sphere (front biased)
    free = np.setdiff1d(np.arange(N_VERTICES), landmark_index)
    u = rng.normal(size=(free.shape[0], 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u[:, 2] = np.abs(u[:, 2])
    mean[free] = u

    mouth_verts = landmark_index[MOUTH_IDX]
    eye_verts = landmark_index[EYE_IDX]
    # pad each region with a few nearby non-landmark vertices
    mouth_extra = free[np.argsort(np.linalg.norm(mean[free] - [0.0, -0.38, 0.9], axis=1))[:16]]
    rest = np.setdiff1d(free, mouth_extra)
    eye_extra = rest[np.argsort(np.minimum(
        np.linalg.norm(mean[rest] - [-0.28, 0.22, 0.9], axis=1),
        np.linalg.norm(mean[rest] - [0.28, 0.22, 0.9], axis=1),
    ))[:12]]

    def flat(vidx, coord):
        return 3 * np.asarray(vidx) + coord

    b_exp = np.zeros((3 * N_VERTICES, K_EXP))
    lm = landmark_index
    # column 0: mouth opening. Upper lip rises, lower lip drops; only this
    # column touches the inner-lip y coordinates, so the mouth gap is an
    # exact monotone function of the opening coefficient.
    b_exp[flat(lm[[61, 62, 63]], 1), 0] = 1.0
    b_exp[flat(lm[[65, 66, 67]], 1), 0] = -1.4
    b_exp[flat(lm[np.arange(49, 54)], 1), 0] = 0.35
    b_exp[flat(lm[np.arange(55, 60)], 1), 0] = -0.6
    b_exp[flat(lm[[48, 60]], 0), 0] = 0.12
    b_exp[flat(lm[[54, 64]], 0), 0] = -0.12
    b_exp[flat(mouth_extra, 1), 0] = rng.normal(scale=0.08, size=16)
    # columns 1-7: mouth shape on outer-lip x/z and extra mouth vertices
    outer = lm[np.arange(48, 60)]
    for c in range(1, N_MOUTH_COLS):
        b_exp[flat(outer, 0), c] = rng.normal(scale=1.0, size=12)
        b_exp[flat(outer, 2), c] = rng.normal(scale=0.6, size=12)
        b_exp[flat(mouth_extra, 0), c] = rng.normal(scale=0.4, size=16)
    # column 8: blink. Upper lids drop toward the lower lids.
    upper_lids = lm[[37, 38, 43, 44]]
    lower_lids = lm[[40, 41, 46, 47]]
    b_exp[flat(upper_lids, 1), 8] = -3.0
    b_exp[flat(lower_lids, 1), 8] = 1.0
    # columns 9-15: eye shape on z only (invisible to the 2-D aspect ratio)
    eyes_all = np.concatenate([eye_verts, eye_extra])
    for c in range(9, K_EXP):
        b_exp[flat(eyes_all, 2), c] = rng.normal(scale=1.0, size=eyes_all.shape[0])

    # geometry columns act on non-landmark vertices only: landmark frames are
    # identity-free, which keeps swap mixtures well defined across identities
    b_id = np.zeros((3 * N_VERTICES, K_ID))
    others = np.setdiff1d(free, np.concatenate([mouth_extra, eye_extra]))
    for c in range(K_ID):
        sel = rng.choice(others, size=64, replace=False)
        for coord in range(3):
            b_id[flat(sel, coord), c] = rng.normal(scale=1.0, size=64)

    return FaceBasis(
        mean_mesh=mean.reshape(-1),
        geometry_basis=_normalize_columns(b_id),
        expression_basis=_normalize_columns(b_exp),
        landmark_index=landmark_index,
    )


def blink_coefficient(basis: FaceBasis) -> float:
    """Expression-column-8 coefficient that fully closes the eyes.

    Solves for the coefficient shrinking the open-eye lid distance (0.08)
    down to 0.012 mesh units, giving a closed-eye aspect ratio ~0.05.
    """
    lm = basis.landmark_index
    col = basis.expression_basis[:, 8]
    drop = col[3 * lm[37] + 1] - col[3 * lm[41] + 1]  # negative: lids approach
    return float((0.08 - 0.012) / -drop)


def mouth_gap(frame: LandmarkFrame) -> float:
    """Vertical inner-lip opening of a landmark frame."""
    top, bottom = MOUTH_GAP_PAIR
    return float(frame.points[top, 1] - frame.points[bottom, 1])


def save_basis(path, basis: FaceBasis, seed=0):
    container.write_container(
        path,
        arrays={
            "mean_mesh": basis.mean_mesh,
            "geometry_basis": basis.geometry_basis,
            "expression_basis": basis.expression_basis,
            "landmark_index": basis.landmark_index,
        },
        name="face_basis",
        seed=seed,
        meta={"n_vertices": basis.n_vertices, "k_id": basis.k_id, "k_exp": basis.k_exp},
    )


def load_basis(path) -> FaceBasis:
    c = container.load_container(path)
    return FaceBasis(
        mean_mesh=c.load("mean_mesh"),
        geometry_basis=c.load("geometry_basis"),
        expression_basis=c.load("expression_basis"),
        landmark_index=c.load("landmark_index"),
    )

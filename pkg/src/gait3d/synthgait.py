"""Synthetic gait sequences: an articulated 2D sagittal stick-figure walker.

Each subject is a bundle of skeletal proportions and gait-waveform
parameters. A walking cycle keeps each leg on the ground for 60% of the
cycle and swinging for 40%, with the two legs half a cycle apart; the hip
angle follows a sinusoid and the knee flexes mainly inside the swing
window. The walker is rasterized as thick limb segments plus a head disc
onto frames with a static textured background, so the segmentation stage
has real work to do. Everything is a pure function of (profile, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import imageio
from .dataset import Manifest, ManifestRecord
from .errors import GenerationError, GeometryError, ParameterError
from .rng import derive_seed, generator

STANCE_FRACTION = 0.6  # of each leg's cycle; the remaining 0.4 is swing
FOREGROUND_LEVEL = 200
BACKGROUND_RANGE = (40, 130)  # inclusive intensity range of the noise texture
DEFAULT_FRAME_H = 128
DEFAULT_FRAME_W = 192

# Sampling ranges for subject profiles. The four gait-defining parameters
# (thigh, shin, hip amplitude, knee amplitude) are drawn on a 16-point
# lattice over their range, so two subjects occupying different lattice
# points are at least 1/16 ≈ 6% of the range apart — comfortably above the
# 5%-of-range separation floor this module promises.
PROFILE_RANGES = {
    "thigh_len": (18.0, 26.0),
    "shin_len": (18.0, 26.0),
    "torso_len": (14.0, 20.0),
    "head_radius": (4.0, 6.0),
    "hip_amp": (18.0, 32.0),
    "knee_amp": (30.0, 60.0),
    "cadence": (20, 36),  # integer frames per cycle, sampled without repeats
    "limb_thickness": (3.0, 4.5),
}
_LATTICE = 16
_SEPARATED = ("thigh_len", "shin_len", "hip_amp", "knee_amp")

CARRY_MODES = ("none", "bag", "coat")
STATUS_CARRY = {"NM": "none", "CL": "coat", "BG": "bag"}


@dataclass(frozen=True)
class SubjectProfile:
    """Per-individual body proportions and gait waveform parameters."""

    subject_id: int
    thigh_len: float
    shin_len: float
    torso_len: float
    head_radius: float
    hip_amp: float  # degrees
    knee_amp: float  # degrees
    cadence: int  # frames per full gait cycle
    limb_thickness: float
    phase_offset: float  # fraction of a cycle
    carry: str = "none"

    def __post_init__(self):
        for name in ("thigh_len", "shin_len", "torso_len", "head_radius", "limb_thickness"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("hip_amp", "knee_amp"):
            if not 0.0 < getattr(self, name) < 90.0:
                raise ParameterError(f"{name} must lie in (0, 90) degrees")
        if self.cadence < 8:
            raise ParameterError(f"cadence must be >= 8 frames, got {self.cadence}")
        if self.carry not in CARRY_MODES:
            raise ParameterError(f"carry must be one of {CARRY_MODES}, got {self.carry!r}")

    @property
    def leg_len(self) -> float:
        return self.thigh_len + self.shin_len

    @property
    def speed(self) -> float:
        """Horizontal advance per frame, from stride geometry."""
        return 4.0 * self.leg_len * math.sin(math.radians(self.hip_amp)) / self.cadence


@dataclass(frozen=True)
class Pose:
    """Joint angles (degrees) and root (hip) position at one instant."""

    left_hip: float
    right_hip: float
    left_knee: float
    right_knee: float
    root_x: float
    root_y: float

    def __post_init__(self):
        if self.left_knee < 0 or self.right_knee < 0:
            raise ParameterError("knee angles cannot be negative (no hyperextension)")


def gait_phase(t: float, cadence: int) -> tuple[float, str]:
    """Cycle phase in [0, 1) at frame t, and which leg owns the half-cycle.

    The left leg's stance occupies phases [0, 0.6); the right leg runs half a
    cycle behind. During double support both feet are down; the reported leg
    is the one owning the current half-cycle.
    """
    if cadence < 8:
        raise ParameterError(f"cadence must be >= 8, got {cadence}")
    phase = (t % cadence) / cadence
    return phase, ("left" if phase < 0.5 else "right")


def leg_phase(phase: float, half_offset: bool) -> float:
    """Phase of one leg's own cycle; the right leg lags by half a cycle."""
    return (phase + 0.5) % 1.0 if half_offset else phase % 1.0


def in_stance(s: float) -> bool:
    """True while a leg with cycle phase s is on the ground (60% duty)."""
    return (s % 1.0) < STANCE_FRACTION


def _knee_angle(s: float, knee_amp: float) -> float:
    """Knee flexion over one leg cycle: a big sine arch spanning the swing
    window, a slight damped bounce during stance."""
    s %= 1.0
    if s >= STANCE_FRACTION:
        u = (s - STANCE_FRACTION) / (1.0 - STANCE_FRACTION)
        return knee_amp * math.sin(math.pi * u)
    return 0.08 * knee_amp * max(0.0, math.sin(math.pi * s / STANCE_FRACTION))


def joint_angles(profile: SubjectProfile, t: float) -> Pose:
    """Pose of the walker at (possibly fractional) frame t.

    Hips swing as hip_amp * sin(2π(phase + phase_offset)) with the legs in
    antiphase; knees flex inside each leg's swing window. The root advances
    at the profile's constant speed and bobs vertically by torso_len/30,
    twice per cycle (once per step).
    """
    phase, _ = gait_phase(t, profile.cadence)
    s_left = leg_phase(phase + profile.phase_offset, False)
    s_right = leg_phase(phase + profile.phase_offset, True)
    hip_l = profile.hip_amp * math.sin(2.0 * math.pi * s_left)
    hip_r = profile.hip_amp * math.sin(2.0 * math.pi * s_right)
    bob = (profile.torso_len / 30.0) * math.sin(4.0 * math.pi * s_left)
    return Pose(
        left_hip=hip_l,
        right_hip=hip_r,
        left_knee=_knee_angle(s_left, profile.knee_amp),
        right_knee=_knee_angle(s_right, profile.knee_amp),
        root_x=profile.speed * t,
        root_y=-bob,  # relative to the hip line; rendering adds the baseline
    )


def _leg_points(root, hip_deg: float, knee_deg: float, profile: SubjectProfile):
    """Hip -> knee -> ankle positions for one leg (y grows downward)."""
    th = math.radians(hip_deg)
    sh = math.radians(hip_deg - knee_deg)  # flexion folds the shin backward
    hip = np.array(root, dtype=float)
    knee = hip + profile.thigh_len * np.array([math.sin(th), math.cos(th)])
    ankle = knee + profile.shin_len * np.array([math.sin(sh), math.cos(sh)])
    return hip, knee, ankle


def figure_segments(pose: Pose, profile: SubjectProfile):
    """All thick segments and discs of the figure, in scene coordinates.

    Returns (segments, discs): segments as (a, b, thickness), discs as
    (center, radius). The bag rectangle is handled separately by the
    renderer because it is axis-aligned rather than capsule-shaped.
    """
    root = np.array([pose.root_x, pose.root_y], dtype=float)
    torso_th = profile.limb_thickness * 1.8
    torso_len = profile.torso_len
    segments = []
    if profile.carry == "coat":
        # a coat widens the torso by 40% and drapes a little below the hip
        drape = root + np.array([0.0, 0.3 * profile.thigh_len])
        segments.append((root + np.array([0.0, -torso_len]), drape, torso_th * 1.4))
    else:
        segments.append((root + np.array([0.0, -torso_len]), root, torso_th))
    for hip_deg, knee_deg in (
        (pose.left_hip, pose.left_knee),
        (pose.right_hip, pose.right_knee),
    ):
        hip, knee, ankle = _leg_points(root, hip_deg, knee_deg, profile)
        segments.append((hip, knee, profile.limb_thickness))
        segments.append((knee, ankle, profile.limb_thickness))
    head_center = root + np.array([0.0, -(torso_len + profile.head_radius - 1.0)])
    discs = [(head_center, profile.head_radius)]
    return segments, discs


def _bag_rect(pose: Pose, profile: SubjectProfile):
    """Axis-aligned bag box hanging at hand height, overlapping the hip."""
    x1 = pose.root_x - 1.0
    x0 = x1 - (4.0 + profile.head_radius)
    y0 = pose.root_y - 1.0
    y1 = y0 + 9.0
    return x0, y0, x1, y1


def render_pose(
    pose: Pose, profile: SubjectProfile, frame_h: int, frame_w: int
) -> np.ndarray:
    """Rasterize the figure to a boolean mask.

    Limbs are capsules (all pixels within thickness/2 of the segment), the
    head a filled disc. Raises GeometryError when any element would leave
    the frame.
    """
    segments, discs = figure_segments(pose, profile)
    rects = [_bag_rect(pose, profile)] if profile.carry == "bag" else []

    lo = np.array([np.inf, np.inf])
    hi = np.array([-np.inf, -np.inf])
    for a, b, th in segments:
        lo = np.minimum(lo, np.minimum(a, b) - th / 2.0)
        hi = np.maximum(hi, np.maximum(a, b) + th / 2.0)
    for c, r in discs:
        lo = np.minimum(lo, c - r)
        hi = np.maximum(hi, c + r)
    for x0, y0, x1, y1 in rects:
        lo = np.minimum(lo, [x0, y0])
        hi = np.maximum(hi, [x1, y1])
    if lo[0] < 0 or lo[1] < 0 or hi[0] > frame_w - 1 or hi[1] > frame_h - 1:
        raise GeometryError(
            f"figure spans x {lo[0]:.1f}..{hi[0]:.1f}, y {lo[1]:.1f}..{hi[1]:.1f}; "
            f"frame is {frame_w}x{frame_h}"
        )

    mask = np.zeros((frame_h, frame_w), dtype=bool)
    for a, b, th in segments:
        _paint_capsule(mask, a, b, th / 2.0)
    for c, r in discs:
        _paint_disc(mask, c, r)
    for x0, y0, x1, y1 in rects:
        ys = slice(int(math.floor(y0)), int(math.ceil(y1)) + 1)
        xs = slice(int(math.floor(x0)), int(math.ceil(x1)) + 1)
        mask[ys, xs] = True
    return mask


def _paint_capsule(mask: np.ndarray, a, b, radius: float) -> None:
    x0 = int(math.floor(min(a[0], b[0]) - radius))
    x1 = int(math.ceil(max(a[0], b[0]) + radius))
    y0 = int(math.floor(min(a[1], b[1]) - radius))
    y1 = int(math.ceil(max(a[1], b[1]) + radius))
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx, dy = b[0] - a[0], b[1] - a[1]
    denom = dx * dx + dy * dy
    if denom == 0.0:
        t = np.zeros_like(xx, dtype=float)
    else:
        t = np.clip(((xx - a[0]) * dx + (yy - a[1]) * dy) / denom, 0.0, 1.0)
    px = a[0] + t * dx
    py = a[1] + t * dy
    hit = (xx - px) ** 2 + (yy - py) ** 2 <= radius * radius
    mask[y0 : y1 + 1, x0 : x1 + 1] |= hit


def _paint_disc(mask: np.ndarray, center, radius: float) -> None:
    x0 = int(math.floor(center[0] - radius))
    x1 = int(math.ceil(center[0] + radius))
    y0 = int(math.floor(center[1] - radius))
    y1 = int(math.ceil(center[1] + radius))
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    hit = (xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius * radius
    mask[y0 : y1 + 1, x0 : x1 + 1] |= hit


def _take_plan(profile, n_frames, frame_h, frame_w, noise_seed):
    """Background texture and the walker poses of one take.

    Draw order matters for reproducibility: background, then start phase,
    then the start-position jitter.
    """
    rng = generator(noise_seed, "take")
    lo, hi = BACKGROUND_RANGE
    background = rng.integers(lo, hi + 1, size=(frame_h, frame_w), dtype=np.uint8)
    t0 = rng.uniform(0.0, profile.cadence)
    # 45 clears the longest admissible backswing (41 px behind the hip)
    start_x = 45.0 + rng.uniform(-3.0, 3.0)
    ground_y = frame_h - 6.0
    hip_y = ground_y - 0.99 * profile.leg_len
    poses = []
    for k in range(n_frames):
        pose = joint_angles(profile, t0 + k)
        poses.append(
            replace(
                pose,
                root_x=start_x + profile.speed * k,
                root_y=hip_y + pose.root_y,
            )
        )
    return background, poses


def _frame_width(n_frames: int, frame_w: int | None) -> int:
    """Default width: room for the fastest admissible walker to finish.

    Start position plus backswing take 76 columns; the fastest profile
    (longest legs, widest hip swing, cadence 20) advances under 5.4 px per
    frame and reaches at most 27 px ahead of the hip.
    """
    if frame_w is not None:
        return frame_w
    return max(DEFAULT_FRAME_W, 76 + math.ceil(5.4 * (n_frames - 1)))


def ground_truth_masks(
    profile: SubjectProfile,
    n_frames: int,
    frame_h: int = DEFAULT_FRAME_H,
    frame_w: int | None = None,
    noise_seed: int = 0,
) -> list[np.ndarray]:
    """The exact walker masks generate_sequence embeds in frames 1..n."""
    frame_w = _frame_width(n_frames, frame_w)
    _, poses = _take_plan(profile, n_frames, frame_h, frame_w, noise_seed)
    return [render_pose(p, profile, frame_h, frame_w) for p in poses]


def generate_sequence(
    profile: SubjectProfile,
    n_frames: int,
    frame_h: int = DEFAULT_FRAME_H,
    frame_w: int | None = None,
    noise_seed: int = 0,
) -> list[np.ndarray]:
    """Grayscale frames of one take: index 0 is the pure background, indices
    1..n_frames show the walker over that same background.

    The walker is painted at a flat bright level at least twice the default
    segmentation threshold above the brightest background pixel.
    """
    if n_frames < 1:
        raise ParameterError(f"n_frames must be >= 1, got {n_frames}")
    frame_w = _frame_width(n_frames, frame_w)
    background, poses = _take_plan(profile, n_frames, frame_h, frame_w, noise_seed)
    frames = [background.copy()]
    for pose in poses:
        mask = render_pose(pose, profile, frame_h, frame_w)
        frame = background.copy()
        frame[mask] = FOREGROUND_LEVEL
        frames.append(frame)
    return frames


def _sample_profiles(n_subjects: int, rng) -> list[dict]:
    """Rejection-sample raw profile parameter dicts with guaranteed spacing.

    The four gait-defining parameters live on a 16-point lattice; a draw is
    rejected when it shares a lattice point with any accepted subject in any
    of those parameters, or repeats a cadence. 1000 straight rejections for
    one subject abort generation.
    """
    accepted: list[dict] = []
    for _ in range(n_subjects):
        for attempt in range(1000):
            cells = {name: int(rng.integers(_LATTICE)) for name in _SEPARATED}
            c_lo, c_hi = PROFILE_RANGES["cadence"]
            cadence = int(rng.integers(c_lo, c_hi + 1))
            clash = any(
                any(cells[n] == prev["cells"][n] for n in _SEPARATED)
                or cadence == prev["cadence"]
                for prev in accepted
            )
            if not clash:
                break
        else:
            raise GenerationError(
                f"no admissible profile after 1000 attempts "
                f"({len(accepted)} of {n_subjects} placed)"
            )
        params = {}
        for name in _SEPARATED:
            lo, hi = PROFILE_RANGES[name]
            step = (hi - lo) / _LATTICE
            params[name] = lo + (cells[name] + 0.5) * step
        for name in ("torso_len", "head_radius", "limb_thickness"):
            lo, hi = PROFILE_RANGES[name]
            params[name] = float(rng.uniform(lo, hi))
        params["cadence"] = cadence
        params["phase_offset"] = float(rng.uniform(0.0, 1.0))
        accepted.append({"cells": cells, "cadence": cadence, "params": params})
    return [a["params"] for a in accepted]


def make_profiles(n_subjects: int, seed: int, carry: str = "none") -> list[SubjectProfile]:
    """Deterministic, pairwise-separated subject profiles for a dataset."""
    if n_subjects < 1:
        raise ParameterError("need at least one subject")
    rng = generator(seed, "profiles")
    raws = _sample_profiles(n_subjects, rng)
    return [
        SubjectProfile(subject_id=i + 1, carry=carry, **raw) for i, raw in enumerate(raws)
    ]


def generate_dataset(
    n_subjects: int,
    sequences_per_subject: int,
    out_root,
    statuses: tuple[str, ...] = ("NM", "NM", "CL", "BG"),
    seed: int = 0,
    n_frames: int = 20,
    frame_h: int = DEFAULT_FRAME_H,
    frame_w: int | None = None,
) -> Manifest:
    """Write a full synthetic dataset and its manifest; return the Manifest.

    Sequences come in mirror pairs: each take is rendered at angle 090, and
    the horizontally mirrored copy is recorded as angle 270. Walking
    statuses cycle over ``statuses`` per take and select the carry variant
    (NM: nothing, CL: coat, BG: bag).
    """
    if n_subjects < 2:
        raise ParameterError(f"need >= 2 subjects, got {n_subjects}")
    if sequences_per_subject < 2:
        raise ParameterError(f"need >= 2 sequences per subject, got {sequences_per_subject}")
    for st in statuses:
        if st not in STATUS_CARRY:
            raise ParameterError(f"unknown status {st!r}; choose from {tuple(STATUS_CARRY)}")
    frame_w = _frame_width(n_frames, frame_w)
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    profiles = make_profiles(n_subjects, seed)
    records: list[ManifestRecord] = []
    n_takes = (sequences_per_subject + 1) // 2
    for profile in profiles:
        status_counts = dict.fromkeys(STATUS_CARRY, 0)
        written = 0
        for j in range(n_takes):
            status = statuses[j % len(statuses)]
            status_counts[status] += 1
            take_no = status_counts[status]
            take = replace(profile, carry=STATUS_CARRY[status])
            noise_seed = derive_seed(seed, "take", profile.subject_id, status, take_no)
            frames = generate_sequence(take, n_frames, frame_h, frame_w, noise_seed)
            for angle in (90, 270):
                if written >= sequences_per_subject:
                    break
                rel = f"{profile.subject_id:03d}/{status}-{take_no:02d}/{angle:03d}"
                seq_dir = out_root / rel
                seq_dir.mkdir(parents=True, exist_ok=True)
                for k, frame in enumerate(frames):
                    img = frame if angle == 90 else np.fliplr(frame)
                    imageio.write_gray(seq_dir / f"frame_{k:04d}.pgm", img)
                records.append(
                    ManifestRecord(
                        sequence_dir=rel,
                        subject_id=profile.subject_id,
                        status=status,
                        angle=angle,
                        frame_count=len(frames),
                    )
                )
                written += 1
    manifest = Manifest(records=records, root=out_root)
    manifest.validate()
    manifest.save(out_root / "manifest.tsv")
    return manifest

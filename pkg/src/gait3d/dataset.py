"""Dataset layout, manifests, preprocessing, clip construction, and splits.

Directory schema (one sequence = one directory of frames):

    <root>/<subject:03d>/<status>-<take:02d>/<angle:03d>/frame_<k:04d>.pgm

A manifest is a UTF-8 text file listing sequences, one per line:

    <sequence_dir>\t<subject_id>\t<status>\t<angle>\t<frame_count>

Lines starting with '#' are comments. sequence_dir is relative to the
manifest's own directory, so a dataset can be moved wholesale.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path, PurePosixPath

import numpy as np

from . import imageio, segmentation
from .errors import DatasetError, ParameterError
from .rng import generator

log = logging.getLogger(__name__)

STATUSES = ("NM", "CL", "BG")


@dataclass(frozen=True)
class ManifestRecord:
    sequence_dir: str  # posix-style, relative to the manifest location
    subject_id: int
    status: str
    angle: int
    frame_count: int


@dataclass
class Manifest:
    """Sequence inventory plus the directory its paths are relative to."""

    records: list[ManifestRecord]
    root: Path

    def validate(self, check_files: bool = True) -> None:
        if not self.records:
            raise DatasetError("manifest has no records")
        ids = sorted({r.subject_id for r in self.records})
        if ids != list(range(1, len(ids) + 1)):
            raise DatasetError(f"subject ids {ids} are not contiguous from 1")
        for r in self.records:
            if r.status not in STATUSES:
                raise DatasetError(f"{r.sequence_dir}: unknown status {r.status!r}")
            if r.frame_count < 1:
                raise DatasetError(f"{r.sequence_dir}: frame_count {r.frame_count} < 1")
            if check_files:
                seq = self.root / PurePosixPath(r.sequence_dir)
                if not seq.is_dir():
                    raise DatasetError(f"sequence directory missing: {seq}")
                n = len(list(seq.glob("frame_*.pgm")))
                if n != r.frame_count:
                    raise DatasetError(
                        f"{seq}: {n} frames on disk, manifest says {r.frame_count}"
                    )

    def subjects(self) -> list[int]:
        return sorted({r.subject_id for r in self.records})

    def frame_paths(self, record: ManifestRecord) -> list[Path]:
        seq = self.root / PurePosixPath(record.sequence_dir)
        return [seq / f"frame_{k:04d}.pgm" for k in range(record.frame_count)]

    def save(self, path) -> None:
        path = Path(path)
        lines = ["# sequence_dir\tsubject_id\tstatus\tangle\tframe_count"]
        for r in self.records:
            lines.append(
                f"{r.sequence_dir}\t{r.subject_id}\t{r.status}\t{r.angle}\t{r.frame_count}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if not path.is_file():
            raise DatasetError(f"manifest not found: {path}")
        records = []
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DatasetError(f"{path}:{lineno}: expected 5 tab-separated fields")
            try:
                rec = ManifestRecord(
                    sequence_dir=parts[0],
                    subject_id=int(parts[1]),
                    status=parts[2],
                    angle=int(parts[3]),
                    frame_count=int(parts[4]),
                )
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
        return cls(records=records, root=path.parent)


def load_sequence(manifest: Manifest, record: ManifestRecord) -> list[np.ndarray]:
    """All frames of one sequence as uint8 arrays, in frame order."""
    return [imageio.read_gray(p) for p in manifest.frame_paths(record)]


def preprocess_sequence(
    frames: list[np.ndarray],
    threshold: int = 30,
    min_area_frac: float = 0.01,
    out_h: int = 64,
    out_w: int = 64,
    background: np.ndarray | None = None,
    with_indices: bool = False,
):
    """Raw grayscale frames -> normalized binary silhouettes.

    The background model is the first frame unless one is supplied
    explicitly; in the former case frame 0 itself yields no silhouette.
    Frames where no object qualifies are discarded (logged, not an error).
    With ``with_indices`` the result pairs each silhouette with the index of
    its source frame in the original list.
    """
    start = 0
    if background is None:
        if not frames:
            return []
        background, frames = frames[0], frames[1:]
        start = 1
    min_area = max(1, int(round(min_area_frac * background.size)))
    out = []
    prev_box = None
    for k, frame in enumerate(frames, start=start):
        raw = segmentation.background_subtract(frame, background, threshold)
        mask = segmentation.denoise(raw)
        boxes = segmentation.component_boxes(mask, min_area)
        box = segmentation.select_tracked(boxes, prev_box)
        if box is None:
            log.warning("frame %d: no object of area >= %d; discarded", k, min_area)
            continue
        prev_box = box
        sil = segmentation.extract_silhouette(mask, box, out_h, out_w)
        out.append((k, sil) if with_indices else sil)
    return out


def preprocess_many(
    manifest: Manifest,
    records: list[ManifestRecord],
    threads: int = 1,
    **kwargs,
) -> list[list[np.ndarray]]:
    """Silhouette lists for several sequences, in the given record order."""

    def work(record: ManifestRecord) -> list[np.ndarray]:
        return preprocess_sequence(load_sequence(manifest, record), **kwargs)

    if threads <= 1:
        return [work(r) for r in records]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, records))


@dataclass(frozen=True)
class Clip:
    """A fixed-length stack of consecutive frames, the unit of network input."""

    tensor: np.ndarray  # (1, T, H, W) float64 with values in {0.0, 1.0}
    label: int  # 0-based class index (subject_id - 1)
    sequence_dir: str
    start_frame: int


def build_clips(
    frames: list[np.ndarray],
    clip_len: int,
    stride: int,
    label: int = 0,
    sequence_dir: str = "",
) -> list[Clip]:
    """Sliding windows at offsets 0, stride, 2*stride, ...

    Yields floor((len - clip_len)/stride) + 1 clips when len >= clip_len,
    otherwise none (short sequences are skipped with a warning).
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if clip_len < 2:
        raise ParameterError(f"clip_len must be >= 2, got {clip_len}")
    if len(frames) < clip_len:
        log.warning(
            "sequence %s: %d frames < clip_len %d; skipped",
            sequence_dir or "<anonymous>",
            len(frames),
            clip_len,
        )
        return []
    clips = []
    for start in range(0, len(frames) - clip_len + 1, stride):
        stack = np.stack(frames[start : start + clip_len]).astype(np.float64)
        clips.append(
            Clip(
                tensor=stack[None],
                label=label,
                sequence_dir=sequence_dir,
                start_frame=start,
            )
        )
    return clips


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(
    manifest: Manifest, ratio: float = 0.8, seed: int = 0
) -> tuple[list[ManifestRecord], list[ManifestRecord]]:
    """Sequence-level stratified split: shuffle each subject's sequences with
    the seeded generator and send the first round(ratio * count) to train.

    The count is clamped so every subject lands in both partitions; no clip
    can cross partitions because whole sequences move as units.
    """
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"split ratio must be in (0, 1), got {ratio}")
    by_subject: dict[int, list[ManifestRecord]] = {}
    for r in manifest.records:
        by_subject.setdefault(r.subject_id, []).append(r)
    rng = generator(seed, "split")
    train: list[ManifestRecord] = []
    test: list[ManifestRecord] = []
    for sid in sorted(by_subject):
        seqs = by_subject[sid]
        if len(seqs) < 2:
            raise DatasetError(f"subject {sid} has {len(seqs)} sequence(s); need >= 2")
        order = rng.permutation(len(seqs))
        n_train = min(max(_round_half_up(ratio * len(seqs)), 1), len(seqs) - 1)
        for pos, idx in enumerate(order):
            (train if pos < n_train else test).append(seqs[idx])
    return train, test

"""
Dataset manifest.

UTF-8 text: a header line ``FRID-MANIFEST v1 seed=<n> frames=<HxW> ...`` followed by one
tab-separated record per clip: clip_id, identity, camera, split, frame paths, estimated flow
paths, mask paths, ground-truth flow paths. Path lists are comma-joined and relative to the
manifest directory; ``-`` marks an empty list.
"""

from pathlib import Path

import structlog
from pydantic import BaseModel, Field

from src.common.errors import DatasetIOError, FormatError

logger = structlog.get_logger(__name__)

HEADER_PREFIX = "FRID-MANIFEST v1"
SPLITS = ("train", "test", "query", "gallery")


class ClipRecord(BaseModel):
    """One tracklet: its labels and the files that hold its frames and flows."""

    clip_id: str
    identity: int = Field(..., ge=0)
    camera: int = Field(..., ge=0, le=1)
    split: str = "train"
    frames: list[str]
    flows: list[str] = Field(default_factory=list)
    masks: list[str] = Field(default_factory=list)
    gt_flows: list[str] = Field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.frames)


class DatasetManifest(BaseModel):
    """Header fields plus clip records; paths resolve against ``root``."""

    seed: int
    height: int
    width: int
    num_identities: int = 0
    clips_per_identity: int = 0
    frames_per_clip: int = 0
    records: list[ClipRecord] = Field(default_factory=list)
    root: str = "."

    def path(self, relative: str) -> Path:
        return Path(self.root) / relative

    def get(self, clip_id: str) -> ClipRecord:
        for record in self.records:
            if record.clip_id == clip_id:
                return record
        raise KeyError(f"clip '{clip_id}' not in manifest")

    def split(self, name: str) -> list[ClipRecord]:
        """
        Records of a split. ``query`` and ``gallery`` are the camera-0 and camera-1 halves
        of ``test``.
        """
        if name not in SPLITS:
            raise ValueError(f"unknown split '{name}'; expected one of {', '.join(SPLITS)}")
        if name == "query":
            return [r for r in self.records if r.split == "test" and r.camera == 0]
        if name == "gallery":
            return [r for r in self.records if r.split == "test" and r.camera == 1]
        return [r for r in self.records if r.split == name]

    def identities(self, split: str) -> list[int]:
        return sorted({r.identity for r in self.split(split)})

    def missing_files(self) -> list[str]:
        missing = []
        for record in self.records:
            for relative in record.frames + record.flows + record.masks + record.gt_flows:
                if not self.path(relative).exists():
                    missing.append(relative)
        return missing

    def header_line(self) -> str:
        return (
            f"{HEADER_PREFIX} seed={self.seed} frames={self.height}x{self.width} "
            f"ids={self.num_identities} clips={self.clips_per_identity} "
            f"length={self.frames_per_clip}"
        )

    def to_text(self) -> str:
        lines = [self.header_line()]
        for r in self.records:
            fields = [r.clip_id, str(r.identity), str(r.camera), r.split]
            fields += [",".join(paths) or "-" for paths in (r.frames, r.flows, r.masks, r.gt_flows)]
            lines.append("\t".join(fields))
        return "\n".join(lines) + "\n"


def parse_manifest(text: str, root: Path | str = ".") -> DatasetManifest:
    """
    Parse manifest text.

    Raises:
        FormatError: Missing header or malformed record
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith(HEADER_PREFIX):
        raise FormatError("manifest must start with 'FRID-MANIFEST v1'")
    header: dict[str, str] = {}
    for token in lines[0][len(HEADER_PREFIX) :].split():
        key, _, value = token.partition("=")
        header[key] = value
    try:
        height, width = (int(x) for x in header["frames"].split("x"))
        manifest = DatasetManifest(
            seed=int(header["seed"]),
            height=height,
            width=width,
            num_identities=int(header.get("ids", 0)),
            clips_per_identity=int(header.get("clips", 0)),
            frames_per_clip=int(header.get("length", 0)),
            root=str(root),
        )
    except (KeyError, ValueError) as e:
        raise FormatError(f"malformed manifest header: {lines[0]!r}") from e

    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 8:
            raise FormatError(f"manifest line {lineno}: expected 8 fields, got {len(fields)}")
        lists = [[] if f == "-" else f.split(",") for f in fields[4:]]
        try:
            manifest.records.append(
                ClipRecord(
                    clip_id=fields[0],
                    identity=int(fields[1]),
                    camera=int(fields[2]),
                    split=fields[3],
                    frames=lists[0],
                    flows=lists[1],
                    masks=lists[2],
                    gt_flows=lists[3],
                )
            )
        except ValueError as e:
            raise FormatError(f"manifest line {lineno}: {e}") from e
    return manifest


def read_manifest(path: Path | str, check_files: bool = True) -> DatasetManifest:
    """
    Read a manifest file, or ``manifest.txt`` inside a directory.

    Raises:
        DatasetIOError: Unreadable manifest, or (with ``check_files``) referenced files missing
        FormatError: Malformed manifest text
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.txt"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot read manifest: {e}", path) from e
    try:
        manifest = parse_manifest(text, root=path.parent)
    except FormatError as e:
        raise FormatError(str(e), path) from e
    if check_files:
        missing = manifest.missing_files()
        if missing:
            shown = ", ".join(missing[:3]) + (" ..." if len(missing) > 3 else "")
            raise DatasetIOError(f"{len(missing)} referenced files are missing: {shown}", path)
    logger.debug("Manifest loaded", path=str(path), clips=len(manifest.records))
    return manifest


def write_manifest(path: Path | str, manifest: DatasetManifest) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.txt"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(manifest.to_text(), encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot write manifest: {e}", path) from e
    return path

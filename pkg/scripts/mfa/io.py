"""
결과 파일 입출력: 계수장 바이너리 컨테이너, CSV, JSON, manifest.

계수장 컨테이너:
- magic b"MFCF"
- 헤더 <u4 [D, J, 방향 수]
- 레벨 0..J 배열, little-endian float64, (k, l) 사전식 순서
- 옆에 JSON manifest (β(0), kind, 생성 파라미터)
"""

import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import polars as pl

from .errors import ConfigError, ShapeMismatchError
from .synthesis import CoefficientField, DenseField, FieldKind

logger = logging.getLogger(__name__)

MAGIC = b"MFCF"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def _sanitize(value: Any) -> Any:
    """±inf / nan 을 JSON 문자열로."""
    if isinstance(value, float) and not np.isfinite(value):
        return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def write_json(path: str | Path, data: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(data), fh, indent=2, default=_json_default, ensure_ascii=False)
        fh.write("\n")
    return path


def read_json(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"File not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Expected a JSON object in {path}")
    return data


def write_csv(path: str | Path, frame: pl.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(path, float_precision=12)
    return path


def save_field(field: CoefficientField, path: str | Path, *, implicit: bool = False) -> Path:
    """계수장을 컨테이너 + manifest 로 저장.

    implicit=True 이고 saturating 계수장이면 파라미터만 manifest 에 남긴다.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, Any] = {
        **field.describe(),
        "format": "MFCF",
        "implicit": bool(implicit and field.kind == FieldKind.SATURATING),
    }
    if not manifest["implicit"]:
        header = np.array([field.dim, field.max_level, field.n_orientations], dtype="<u4")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(header.tobytes())
            for j in range(field.max_level + 1):
                fh.write(np.ascontiguousarray(field.level(j), dtype="<f8").tobytes())
        manifest["sha256"] = file_hash(path)
    write_json(_manifest_path(path), manifest)
    logger.info(f"Saved {field.kind.value} field (D={field.dim}, J={field.max_level}) to {path}")
    return path


def load_field(path: str | Path) -> DenseField:
    """컨테이너를 DenseField 로 읽기. implicit manifest 는 호출자가 재구성해야 한다."""
    path = Path(path)
    manifest = field_manifest(path)
    if manifest.get("implicit"):
        raise ConfigError(f"{path} describes an implicit field; rebuild it from its parameters")
    try:
        raw = path.read_bytes()
    except FileNotFoundError as e:
        raise ConfigError(f"Field file not found: {path}") from e
    if raw[:4] != MAGIC:
        raise ShapeMismatchError(f"{path} is not a coefficient field container")
    dim, J, n_or = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=3, offset=4))
    if n_or != (1 << dim) - 1:
        raise ShapeMismatchError(f"Header orientation count {n_or} invalid for D={dim}")
    offset = 16
    levels = []
    for j in range(J + 1):
        shape = (1 << j,) * dim + (n_or,)
        count = int(np.prod(shape))
        if offset + 8 * count > len(raw):
            raise ShapeMismatchError(f"{path} truncated at level {j}")
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        levels.append(values.reshape(shape).copy())
        offset += 8 * count
    if offset != len(raw):
        raise ShapeMismatchError(f"{path} has {len(raw) - offset} trailing bytes")
    return DenseField(levels, float(manifest.get("scaling_coefficient", 0.0)))


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def field_manifest(path: str | Path) -> dict[str, Any]:
    """컨테이너 옆 manifest. 없으면 빈 dict."""
    manifest = _manifest_path(Path(path))
    return read_json(manifest) if manifest.exists() else {}


def file_hash(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path,
    experiment: str,
    claims: list[str],
    files: list[Path],
    extra: dict[str, Any] | None = None,
) -> Path:
    """출력 파일 목록과 sha256, 검증하는 claim 태그."""
    out_dir = Path(out_dir)
    entries = []
    for p in sorted(set(files)):
        if not p.exists():
            continue
        name = p.relative_to(out_dir) if p.is_relative_to(out_dir) else p
        entries.append({"path": str(name), "sha256": file_hash(p)})
    data = {
        "experiment": experiment,
        "claims": claims,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "files": entries,
        **(extra or {}),
    }
    return write_json(out_dir / "manifest.json", data)

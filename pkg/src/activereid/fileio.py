"""Flat-file boundary shared with external training pipelines.

Formats:
  embeddings  binary: magic "AASE", u32-LE n, u32-LE d, then n*d float32-LE
              row-major; a UTF-8 JSON sidecar manifest carries ids and
              optional image_uris / identities (array lengths must equal n).
  constraints UTF-8 JSON Lines, one object per line:
              {"a": id, "b": id, "relation": "ml"|"cl",
               "source": "oracle"|"seed"|"inferred", "cycle": int}
  partition   UTF-8 CSV "id,cluster,outlier" with outlier encoded as 0/1.

All writers go through a temp file plus atomic rename; a crashed run never
leaves a partial artifact behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import ValidationError
from .model import CANNOT_LINK, MUST_LINK, Constraint, ConstraintStore, EmbeddingSet, PairKey, Partition

MAGIC = b"AASE"

_REL_TO_WIRE = {MUST_LINK: "ml", CANNOT_LINK: "cl"}
_WIRE_TO_REL = {"ml": MUST_LINK, "cl": CANNOT_LINK}


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- embeddings


def write_embeddings(path, manifest_path, emb: EmbeddingSet) -> None:
    header = MAGIC + struct.pack("<II", emb.n, emb.dim)
    body = np.ascontiguousarray(emb.vectors, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + body)
    manifest = {
        "ids": emb.ids,
        "image_uris": emb.image_uris,
        "identities": emb.identities,
    }
    write_json(manifest_path, manifest)


def read_embeddings(path, manifest_path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise ValidationError(f"{path}: not an embeddings file (bad magic)")
    n, d = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * n * d
    if len(raw) != expected:
        raise ValidationError(f"{path}: truncated or oversized matrix ({len(raw)} bytes, expected {expected})")
    vectors = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d).astype(np.float64)

    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("ids",):
        if key not in manifest:
            raise ValidationError(f"{manifest_path}: missing {key!r}")
    ids = manifest["ids"]
    uris = manifest.get("image_uris")
    identities = manifest.get("identities")
    if len(ids) != n:
        raise ValidationError(f"{manifest_path}: {len(ids)} ids for n = {n}")
    for name, arr in (("image_uris", uris), ("identities", identities)):
        if arr is not None and len(arr) != n:
            raise ValidationError(f"{manifest_path}: {name} length {len(arr)} != n = {n}")
    return EmbeddingSet(ids, vectors, uris, identities)


# ---------------------------------------------------------------- constraints


def constraint_to_record(c: Constraint, ids: list[str]) -> dict:
    return {
        "a": ids[c.pair.a],
        "b": ids[c.pair.b],
        "relation": _REL_TO_WIRE[c.relation],
        "source": c.source,
        "cycle": c.cycle,
    }


def constraint_from_record(rec: dict, index: dict[str, int]) -> Constraint:
    try:
        pair = PairKey(index[rec["a"]], index[rec["b"]])
        relation = _WIRE_TO_REL[rec["relation"]]
        return Constraint(pair, relation, rec.get("source", "oracle"), int(rec.get("cycle", 0)))
    except KeyError as exc:
        raise ValidationError(f"bad constraint record {rec!r}: {exc}") from exc


def write_constraints(path, constraints, ids: list[str]) -> None:
    lines = [json.dumps(constraint_to_record(c, ids), sort_keys=True) for c in constraints]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def append_constraints(path, constraints, ids: list[str]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for c in constraints:
            fh.write(json.dumps(constraint_to_record(c, ids), sort_keys=True) + "\n")


def read_constraints(path, ids: list[str]) -> list[Constraint]:
    index = {s: i for i, s in enumerate(ids)}
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON") from exc
            out.append(constraint_from_record(rec, index))
    return out


def load_store(path, ids: list[str]) -> ConstraintStore:
    store = ConstraintStore(len(ids))
    for c in read_constraints(path, ids):
        store.add(c)
    return store


def closure_constraints(store: ConstraintStore, cycle: int = 0) -> list[Constraint]:
    """All derivable pair relations not explicitly stored, marked source="inferred".

    Lets external trainers tell paid annotations from free (closure) ones.
    Enumerates all sample pairs, so intended for desk-scale exports.
    """
    explicit = {(c.pair, c.relation) for c in store.constraints}
    out = []
    for a in range(store.num_samples - 1):
        for b in range(a + 1, store.num_samples):
            p = PairKey(a, b)
            rel = store.relation_of(p)
            if rel != "unknown" and (p, rel) not in explicit:
                out.append(Constraint(p, rel, source="inferred", cycle=cycle))
    return out


# ---------------------------------------------------------------- partitions


def write_partition(path, part: Partition, ids: list[str]) -> None:
    rows = ["id,cluster,outlier"]
    for i, sample_id in enumerate(ids):
        rows.append(f"{sample_id},{int(part.labels[i])},{int(part.outlier_flags[i])}")
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_partition(path, ids: list[str], method_tag="A") -> Partition:
    index = {s: i for i, s in enumerate(ids)}
    labels = np.full(len(ids), -1, dtype=np.int64)
    flags = np.zeros(len(ids), dtype=bool)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,cluster,outlier":
            raise ValidationError(f"{path}: bad partition header {header!r}")
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields")
            sample_id, cluster, outlier = parts
            if sample_id not in index:
                raise ValidationError(f"{path}:{lineno}: unknown id {sample_id!r}")
            i = index[sample_id]
            if labels[i] != -1:
                raise ValidationError(f"{path}:{lineno}: duplicate id {sample_id!r}")
            labels[i] = int(cluster)
            if outlier not in ("0", "1"):
                raise ValidationError(f"{path}:{lineno}: outlier must be 0 or 1")
            flags[i] = outlier == "1"
    if np.any(labels < 0):
        missing = [ids[i] for i in np.flatnonzero(labels < 0)[:5]]
        raise ValidationError(f"{path}: missing rows for ids {missing}")
    return Partition(labels, flags, method_tag)


# ---------------------------------------------------------------- jsonl misc


def write_jsonl(path, records) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out

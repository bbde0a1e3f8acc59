"""Embedding sets: feature matrices produced by an external encoder."""

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputError
from ..validation import check_samples

VEMB_MAGIC = b"VEMB"
VEMB_VERSION = 1


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """N x D feature vectors for one set of MRIs.

    ``ids`` are optional subject identifiers aligned with the rows;
    ``source_tag`` names the encoder (e.g. ``"R50"``).
    """

    vectors: np.ndarray
    source_tag: str = ""
    ids: tuple = field(default=None)

    def __post_init__(self):
        X = check_samples(self.vectors, "vectors")
        X.setflags(write=False)
        object.__setattr__(self, "vectors", X)
        if self.ids is not None:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != X.shape[0]:
                raise InputError(f"{len(ids)} ids for {X.shape[0]} vectors")
            object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def subset(self, ids):
        """Rows for the given subject ids, in that order."""
        if self.ids is None:
            raise InputError("embedding set has no ids to select by")
        index = {s: i for i, s in enumerate(self.ids)}
        missing = [s for s in ids if s not in index]
        if missing:
            raise InputError(f"no embedding for subjects {missing[:5]}")
        rows = [index[s] for s in ids]
        return EmbeddingSet(self.vectors[rows], self.source_tag, tuple(ids))


def parse_embeddings_csv(text, source_tag=""):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("empty embedding CSV") from None
    if not header or header[0].strip() != "id":
        raise InputError("embedding CSV header must start with 'id'")
    ids, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"embedding CSV line {lineno}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        try:
            rows.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise InputError(f"embedding CSV line {lineno}: {exc}") from None
    return EmbeddingSet(np.array(rows, dtype=np.float64), source_tag, tuple(ids))


def format_embeddings_csv(emb):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id"] + [f"f{j}" for j in range(emb.dim)])
    ids = emb.ids or tuple(str(i) for i in range(len(emb)))
    for sid, row in zip(ids, emb.vectors):
        writer.writerow([sid] + [repr(float(x)) for x in row])
    return out.getvalue()


def parse_embeddings_binary(raw, source_tag=""):
    """Decode the ``VEMB`` container: magic, u32 version, u32 N, u32 D, then N*D float32 LE."""
    if len(raw) < 16 or raw[:4] != VEMB_MAGIC:
        raise InputError("not a VEMB embedding file")
    version, n, d = struct.unpack_from("<III", raw, 4)
    if version != VEMB_VERSION:
        raise InputError(f"unsupported VEMB version {version}")
    expected = 16 + 4 * n * d
    if len(raw) < expected:
        raise InputError(f"truncated VEMB payload ({len(raw)} of {expected} bytes)")
    vectors = np.frombuffer(raw, dtype="<f4", count=n * d, offset=16).reshape(n, d)
    return EmbeddingSet(vectors.astype(np.float64), source_tag)


def format_embeddings_binary(emb):
    n, d = emb.vectors.shape
    header = VEMB_MAGIC + struct.pack("<III", VEMB_VERSION, n, d)
    return header + emb.vectors.astype("<f4").tobytes()


def load_embeddings(path, source_tag=""):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] == VEMB_MAGIC:
        return parse_embeddings_binary(raw, source_tag)
    return parse_embeddings_csv(raw.decode("utf-8"), source_tag)


def toy_embedder(v, dim=64, seed=0, pool=4):
    """Deterministic stand-in for a pretrained encoder.

    Mean-pools the volume over ``pool``-sized blocks (trailing voxels that
    do not fill a block are dropped), flattens, and projects with a seeded
    random sign matrix scaled by ``1/sqrt(dim)``. Linear in the voxel data.
    """
    if dim < 1:
        raise InputError(f"dim must be >= 1, got {dim}")
    data = np.asarray(v.data, dtype=np.float64)
    if min(data.shape) < pool:
        raise InputError(f"volume {data.shape} is smaller than the pooling block {pool}")
    nx, ny, nz = (s // pool for s in data.shape)
    data = data[: nx * pool, : ny * pool, : nz * pool]
    pooled = data.reshape(nx, pool, ny, pool, nz, pool).mean(axis=(1, 3, 5)).ravel()
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(dim, pooled.size), dtype=np.int8) * 2 - 1
    return (signs @ pooled) / np.sqrt(dim)


def embed_volumes(volumes, dim=64, seed=0, source_tag="toy", ids=None):
    vectors = np.stack([toy_embedder(v, dim, seed) for v in volumes])
    return EmbeddingSet(vectors, source_tag, ids)

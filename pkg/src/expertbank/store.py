"""Binary persistence for experts and routers.

Little-endian throughout. Weights and cluster centers are stored at
float64 so a load-save cycle is byte-stable and warm starts resume from
exactly the trained values; signature payloads (mean, spectrum, basis)
are stored at float32 — 4 bytes per value, which is the unit the memory
footprint is accounted in. A plain-text manifest records a sha256 per
artifact and is verified on load.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import clustering, signature, vae
from .assigner import AssignerModel, IdentityRouter
from .expert import ExpertStore, TaskExpert

EXPERT_MAGIC = b"XPRT"
ASSIGNER_MAGIC = b"XASN"
FORMAT_VERSION = 1

_DTYPES = {0: np.float64, 1: np.float32, 2: np.int64}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1, np.dtype(np.int64): 2}


class StoreFormatError(ValueError):
    """Corrupt or incompatible store payload."""


def _pack_array(buf, arr):
    code = _CODES[arr.dtype]
    buf += struct.pack("<BB", code, arr.ndim)
    for dim in arr.shape:
        buf += struct.pack("<I", dim)
    buf += arr.tobytes(order="C")


class _Reader:
    def __init__(self, data, name):
        self.data = data
        self.off = 0
        self.name = name

    def take(self, n):
        if self.off + n > len(self.data):
            raise StoreFormatError(f"{self.name}: truncated at byte {self.off}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self):
        code, ndim = self.unpack("<BB")
        if code not in _DTYPES:
            raise StoreFormatError(f"{self.name}: unknown dtype code {code}")
        shape = tuple(self.unpack("<I")[0] for _ in range(ndim))
        dtype = np.dtype(_DTYPES[code])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self.take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

    def done(self):
        if self.off != len(self.data):
            raise StoreFormatError(
                f"{self.name}: {len(self.data) - self.off} trailing bytes")


def expert_to_bytes(expert):
    """Serialized finalized expert; deterministic function of its values."""
    if not expert.finalized:
        raise ValueError("only finalized experts are serialized")
    buf = bytearray()
    buf += EXPERT_MAGIC
    buf += struct.pack("<B", FORMAT_VERSION)
    buf += struct.pack("<IIId", expert.task_id, expert.params.input_dim,
                       expert.params.latent_dim, expert.params.beta)
    buf += struct.pack("<I", len(expert.params.enc_w))
    for w, b in zip(expert.params.enc_w, expert.params.enc_b):
        _pack_array(buf, w)
        _pack_array(buf, b)
    buf += struct.pack("<I", len(expert.params.dec_w))
    for w, b in zip(expert.params.dec_w, expert.params.dec_b):
        _pack_array(buf, w)
        _pack_array(buf, b)
    _pack_array(buf, expert.kmeans.centers)
    buf += struct.pack("<d", expert.kmeans.inertia)
    buf += struct.pack("<I", len(expert.signatures))
    for sig in expert.signatures:
        buf += struct.pack("<I", sig.cluster_id)
        _pack_array(buf, sig.mean.astype(np.float32))
        _pack_array(buf, sig.eigvals.astype(np.float32))
        _pack_array(buf, sig.eigvecs.astype(np.float32))
    return bytes(buf)


def expert_from_bytes(data, name="expert"):
    r = _Reader(data, name)
    if r.take(4) != EXPERT_MAGIC:
        raise StoreFormatError(f"{name}: bad magic")
    (version,) = r.unpack("<B")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{name}: unsupported version {version}")
    task_id, input_dim, latent_dim, beta = r.unpack("<IIId")
    (n_enc,) = r.unpack("<I")
    enc_w, enc_b = [], []
    for _ in range(n_enc):
        enc_w.append(r.array())
        enc_b.append(r.array())
    (n_dec,) = r.unpack("<I")
    dec_w, dec_b = [], []
    for _ in range(n_dec):
        dec_w.append(r.array())
        dec_b.append(r.array())
    params = vae.VaeParams(input_dim, latent_dim, beta, enc_w, enc_b, dec_w, dec_b)
    centers = r.array()
    (inertia,) = r.unpack("<d")
    kmeans = clustering.KMeansModel(centers, inertia, 0)
    (n_sigs,) = r.unpack("<I")
    sigs = []
    for _ in range(n_sigs):
        (cluster_id,) = r.unpack("<I")
        mean = r.array().astype(np.float64)
        eigvals = r.array().astype(np.float64)
        eigvecs = r.array().astype(np.float64)
        sigs.append(signature.LatentSignature(task_id, cluster_id,
                                              mean, eigvals, eigvecs))
    r.done()
    return TaskExpert(task_id, params, kmeans, sigs, loss_trace=[], finalized=True)


def signature_payload_bytes(expert):
    """Bytes of stored signature values (4 per value), headers excluded."""
    return sum(4 * sig.value_count() for sig in expert.signatures)


def assigner_to_bytes(router, kind):
    buf = bytearray()
    buf += ASSIGNER_MAGIC
    buf += struct.pack("<B", FORMAT_VERSION)
    if isinstance(router, IdentityRouter):
        buf += struct.pack("<BI", 0, router.task_id)
    elif isinstance(router, AssignerModel):
        buf += struct.pack("<BI", 1, len(router.task_ids))
        for t in router.task_ids:
            buf += struct.pack("<I", t)
        for arr in (router.w1, router.b1, router.w2, router.b2):
            _pack_array(buf, arr)
    elif router is None and kind == "cos":
        buf += struct.pack("<B", 2)  # parameter-free router
    else:
        raise ValueError(f"cannot serialize router {router!r} of kind {kind!r}")
    return bytes(buf)


def assigner_from_bytes(data, name="assigner"):
    r = _Reader(data, name)
    if r.take(4) != ASSIGNER_MAGIC:
        raise StoreFormatError(f"{name}: bad magic")
    (version,) = r.unpack("<B")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{name}: unsupported version {version}")
    (code,) = r.unpack("<B")
    if code == 0:
        (task_id,) = r.unpack("<I")
        r.done()
        return IdentityRouter(task_id), "identity"
    if code == 1:
        (k,) = r.unpack("<I")
        task_ids = [r.unpack("<I")[0] for _ in range(k)]
        arrays = [r.array() for _ in range(4)]
        r.done()
        return AssignerModel(task_ids, *arrays), "ce"
    if code == 2:
        r.done()
        return None, "cos"
    raise StoreFormatError(f"{name}: unknown router code {code}")


@dataclass
class ModelStore:
    """Everything a deployment needs: the expert bank plus the router."""
    experts: ExpertStore = field(default_factory=ExpertStore)
    router: AssignerModel | IdentityRouter | None = None
    assigner_kind: str = "ce"   # ce | cos | identity
    signature_bytes: int = 0    # measured at save/load time

    @property
    def latent_dim(self):
        return self.experts.last.params.latent_dim if len(self.experts) else 0

    @property
    def clusters_per_task(self):
        return len(self.experts.last.signatures) if len(self.experts) else 0


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def save_store(store, directory):
    """Write expert_NNN.bin files, the router, and manifest.txt; returns
    the manifest path. Rewrites are deterministic for identical stores."""
    os.makedirs(directory, exist_ok=True)
    artifacts = []
    sig_bytes = 0
    for ex in store.experts:
        blob = expert_to_bytes(ex)
        name = f"expert_{ex.task_id:03d}.bin"
        with open(os.path.join(directory, name), "wb") as fh:
            fh.write(blob)
        artifacts.append((name, blob))
        sig_bytes += signature_payload_bytes(ex)
    blob = assigner_to_bytes(store.router, store.assigner_kind)
    with open(os.path.join(directory, "assigner.bin"), "wb") as fh:
        fh.write(blob)
    artifacts.append(("assigner.bin", blob))
    store.signature_bytes = sig_bytes

    lines = [
        f"format-version {FORMAT_VERSION}",
        f"experts {len(store.experts)}",
        f"latent-dim {store.latent_dim}",
        f"clusters-per-task {store.clusters_per_task}",
        f"assigner {store.assigner_kind}",
        f"signature-bytes {sig_bytes}",
    ]
    for name, data in sorted(artifacts):
        lines.append(f"artifact {name} {len(data)} {_sha256(data)}")
    manifest = "\n".join(lines) + "\n"
    path = os.path.join(directory, "manifest.txt")
    with open(path, "w") as fh:
        fh.write(manifest)
    return path


def load_store(directory):
    """Read a store back, verifying every artifact against the manifest."""
    path = os.path.join(directory, "manifest.txt")
    if not os.path.exists(path):
        raise StoreFormatError(f"no manifest at {path}")
    meta = {}
    artifacts = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "artifact":
                artifacts.append((parts[1], int(parts[2]), parts[3]))
            else:
                meta[parts[0]] = parts[1]
    if int(meta.get("format-version", -1)) != FORMAT_VERSION:
        raise StoreFormatError(f"unsupported store version {meta.get('format-version')}")

    blobs = {}
    for name, size, digest in artifacts:
        with open(os.path.join(directory, name), "rb") as fh:
            data = fh.read()
        if len(data) != size or _sha256(data) != digest:
            raise StoreFormatError(f"checksum mismatch for {name}")
        blobs[name] = data

    store = ModelStore()
    expert_names = sorted(n for n in blobs if n.startswith("expert_"))
    if len(expert_names) != int(meta.get("experts", len(expert_names))):
        raise StoreFormatError("manifest expert count disagrees with artifacts")
    for name in expert_names:
        store.experts.add(expert_from_bytes(blobs[name], name))
    if "assigner.bin" not in blobs:
        raise StoreFormatError("store is missing assigner.bin")
    store.router, store.assigner_kind = assigner_from_bytes(blobs["assigner.bin"])
    store.signature_bytes = int(meta.get("signature-bytes", 0))
    measured = sum(signature_payload_bytes(e) for e in store.experts)
    if store.signature_bytes != measured:
        raise StoreFormatError(
            f"manifest signature-bytes {store.signature_bytes} != measured {measured}")
    return store

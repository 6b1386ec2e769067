"""Linear adapter training over frozen embeddings.

Instead of fine-tuning an encoder, three square matrices are learned on top
of fixed embeddings: one for descriptors, one for object-list texts, one
for images. Each adapter output is renormalized, so the matrices only
reshape directions. Training minimizes a dual contrastive loss over
in-batch negatives,

    L = (1/b) * sum_i ( L_scene_i + vision_weight * L_vision_i ),

where each term is the InfoNCE loss of the true pair against the batch:

    L_scene_i = -log( exp(s_ii / tau) / sum_j exp(s_ij / tau) ),

with s the cosine between adapted descriptor i and adapted candidate j.
The temperature is trained in log space (tau = exp(log_tau), init 0.07).
All gradients are analytic and checked against central finite differences
in the test suite; the optimizer is plain ADAM.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .embeddings import Encoder, EmbeddingStore, normalize, read_store, write_store
from .errors import (
    BatchTooSmallError,
    DimMismatchError,
    FormatError,
    NonFiniteLossError,
    ValidationError,
)

DEFAULT_TAU = 0.07


@dataclass
class AdapterParams:
    A_desc: np.ndarray
    A_obj: np.ndarray
    A_img: np.ndarray
    log_tau: float

    @property
    def dim(self) -> int:
        return self.A_desc.shape[0]

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    @classmethod
    def identity(cls, dim: int, tau: float = DEFAULT_TAU) -> "AdapterParams":
        if dim < 2:
            raise ValueError("dim must be at least 2")
        if tau <= 0:
            raise ValueError("tau must be positive")
        return cls(
            A_desc=np.eye(dim, dtype=np.float64),
            A_obj=np.eye(dim, dtype=np.float64),
            A_img=np.eye(dim, dtype=np.float64),
            log_tau=math.log(tau),
        )

    def copy(self) -> "AdapterParams":
        return AdapterParams(
            A_desc=self.A_desc.copy(),
            A_obj=self.A_obj.copy(),
            A_img=self.A_img.copy(),
            log_tau=self.log_tau,
        )


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 56
    learning_rate: float = 1e-5
    vision_weight: float = 1.0
    seed: int = 0
    init_tau: float = DEFAULT_TAU
    symmetric: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.init_tau <= 0:
            raise ValueError("init_tau must be positive")
        if self.vision_weight < 0:
            raise ValueError("vision_weight must be non-negative")


def adapter_forward(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Apply one adapter to one vector and renormalize."""
    out = np.asarray(matrix, dtype=np.float64) @ np.asarray(vector, dtype=np.float64)
    return normalize(out)


def infonce_loss(sims: np.ndarray, positive_index: int, tau: float) -> float:
    """Contrastive loss of one row of similarities against its positive.

    Computed as logsumexp(sims / tau) - sims[positive] / tau with the max
    subtracted first, so extreme temperatures stay finite. All-equal sims
    give exactly log(len(sims)).
    """
    sims = np.asarray(sims, dtype=np.float64)
    if sims.ndim != 1 or sims.shape[0] < 2:
        raise BatchTooSmallError("need at least two candidates for a contrastive loss")
    if not 0 <= positive_index < sims.shape[0]:
        raise ValueError(f"positive index {positive_index} out of range")
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = sims / tau
    z = z - z.max()
    return float(np.log(np.exp(z).sum()) - z[positive_index])


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _row_ce(z: np.ndarray) -> np.ndarray:
    """Per-row cross entropy of the diagonal under row softmax."""
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return lse - np.diagonal(shifted)


def _normalize_rows_with_norms(matrix: np.ndarray):
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NonFiniteLossError("adapter collapsed an embedding to zero")
    return matrix / norms, norms


def batch_gradients(
    desc_emb: np.ndarray,
    obj_emb: np.ndarray,
    img_emb: np.ndarray,
    params: AdapterParams,
    vision_weight: float = 1.0,
    symmetric: bool = False,
):
    """Loss and exact gradients for one batch of aligned embeddings.

    Inputs are (b, dim) float arrays of raw (pre-adapter) embeddings where
    row i of each array belongs to the same training pair. Returns
    (loss, grads) with grads holding 'A_desc', 'A_obj', 'A_img', 'log_tau'.
    """
    u_desc = np.asarray(desc_emb, dtype=np.float64)
    u_obj = np.asarray(obj_emb, dtype=np.float64)
    u_img = np.asarray(img_emb, dtype=np.float64)
    b = u_desc.shape[0]
    if b < 2:
        raise BatchTooSmallError("contrastive batches need at least two pairs")
    if not (u_desc.shape == u_obj.shape == u_img.shape):
        raise DimMismatchError("embedding blocks disagree on shape")
    if u_desc.shape[1] != params.dim:
        raise DimMismatchError(
            f"embeddings are {u_desc.shape[1]}-dimensional, adapters {params.dim}-dimensional"
        )

    tau = params.tau
    x = u_desc @ params.A_desc.T
    y = u_obj @ params.A_obj.T
    z = u_img @ params.A_img.T
    d, nx = _normalize_rows_with_norms(x)
    o, ny = _normalize_rows_with_norms(y)
    v, nz = _normalize_rows_with_norms(z)

    c_scene = d @ o.T
    c_vision = d @ v.T
    s_scene = c_scene / tau
    s_vision = c_vision / tau

    eye = np.eye(b)
    p_scene = _softmax_rows(s_scene)
    p_vision = _softmax_rows(s_vision)
    loss_rows = _row_ce(s_scene) + vision_weight * _row_ce(s_vision)
    ds_scene = (p_scene - eye) / b
    ds_vision = vision_weight * (p_vision - eye) / b
    if symmetric:
        q_scene = _softmax_rows(s_scene.T).T
        q_vision = _softmax_rows(s_vision.T).T
        loss_rows = 0.5 * (loss_rows + _row_ce(s_scene.T) + vision_weight * _row_ce(s_vision.T))
        ds_scene = 0.5 * (ds_scene + (q_scene - eye) / b)
        ds_vision = 0.5 * (ds_vision + vision_weight * (q_vision - eye) / b)
    loss = float(loss_rows.sum() / b)
    if not np.isfinite(loss):
        raise NonFiniteLossError("batch loss is not finite")

    # d(loss)/d(cosine) matrices
    g_scene = ds_scene / tau
    g_vision = ds_vision / tau

    grad_d = g_scene @ o + g_vision @ v
    grad_o = g_scene.T @ d
    grad_v = g_vision.T @ d

    # backprop through row normalization: g -> (g - (g . d) d) / ||x||
    def through_norm(grad_out, unit_rows, norms):
        inner = (grad_out * unit_rows).sum(axis=1, keepdims=True)
        return (grad_out - inner * unit_rows) / norms

    grad_x = through_norm(grad_d, d, nx)
    grad_y = through_norm(grad_o, o, ny)
    grad_z = through_norm(grad_v, v, nz)

    grads = {
        "A_desc": grad_x.T @ u_desc,
        "A_obj": grad_y.T @ u_obj,
        "A_img": grad_z.T @ u_img,
        # s = c * exp(-log_tau), so ds/dlog_tau = -s
        "log_tau": float(-(ds_scene * s_scene).sum() - (ds_vision * s_vision).sum()),
    }
    return loss, grads


def batch_loss(
    pairs,
    params: AdapterParams,
    encoder: Encoder,
    vision_weight: float = 1.0,
    symmetric: bool = False,
) -> float:
    """Loss for a batch of (descriptor, photo) pairs, encoding on the fly."""
    from .corpus import render_object_list

    if len(pairs) < 2:
        raise BatchTooSmallError("contrastive batches need at least two pairs")
    descriptors = [p[0] for p in pairs]
    photos = [p[1] for p in pairs]
    u_desc = encoder.encode_texts([d.text for d in descriptors]).astype(np.float64)
    u_obj = encoder.encode_texts([render_object_list(p.objects) for p in photos]).astype(
        np.float64
    )
    u_img = encoder.encode_images([p.image_ref for p in photos]).astype(np.float64)
    loss, _ = batch_gradients(u_desc, u_obj, u_img, params, vision_weight, symmetric)
    return loss


# ---- optimizer ------------------------------------------------------------------


class _Adam:
    def __init__(self, shapes: dict, lr: float, beta1: float, beta2: float, eps: float):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, values: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for key, grad in grads.items():
            grad = np.asarray(grad, dtype=np.float64)
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * grad * grad
            m_hat = self.m[key] / (1 - self.beta1**self.t)
            v_hat = self.v[key] / (1 - self.beta2**self.t)
            out[key] = values[key] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


# ---- training loop -----------------------------------------------------------------


def _pair_embeddings(corpus: Corpus, descriptors, encoder: Encoder):
    from .corpus import render_object_list

    by_id = {d.dialogue_id: d for d in descriptors}
    photo_by_id = {p.id: p for p in corpus.photos}
    desc_texts, obj_texts, img_refs = [], [], []
    for dialogue in corpus.dialogues:
        if dialogue.target_photo_id is None:
            raise ValidationError(f"dialogue {dialogue.id!r} has no target photo")
        if dialogue.id not in by_id:
            raise ValidationError(f"no descriptor for dialogue {dialogue.id!r}")
        photo = photo_by_id[dialogue.target_photo_id]
        desc_texts.append(by_id[dialogue.id].text)
        obj_texts.append(render_object_list(photo.objects))
        img_refs.append(photo.image_ref)
    u_desc = encoder.encode_texts(desc_texts).astype(np.float64)
    u_obj = encoder.encode_texts(obj_texts).astype(np.float64)
    u_img = encoder.encode_images(img_refs).astype(np.float64)
    return u_desc, u_obj, u_img


def train(
    train_corpus: Corpus,
    train_descriptors,
    val_corpus: Corpus,
    val_descriptors,
    encoder: Encoder,
    config: TrainConfig | None = None,
    ks: tuple[int, ...] = (1, 5, 10),
):
    """Fit adapters with ADAM over shuffled minibatches.

    After every epoch the validation split is scored and the parameters
    with the highest average recall over ``ks`` are kept (the identity
    initialization counts as epoch 0, so zero epochs returns it untouched).
    Returns (best_params, history) where history holds one row per epoch
    with the mean train loss and validation recalls.
    """
    from .evaluation import split_metrics

    config = config or TrainConfig()
    u_desc, u_obj, u_img = _pair_embeddings(train_corpus, train_descriptors, encoder)
    n = u_desc.shape[0]
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds {n} training pairs")

    params = AdapterParams.identity(u_desc.shape[1], config.init_tau)
    fusion_weight = config.vision_weight

    def validate(p: AdapterParams) -> dict:
        return split_metrics(
            val_corpus, val_descriptors, encoder, adapters=p, vision_weight=fusion_weight, ks=ks
        )

    metrics = validate(params)
    history = [{"epoch": 0, "train_loss": None, **{f"val_r{k}": metrics[k] for k in ks},
                "val_avg": sum(metrics[k] for k in ks) / len(ks)}]
    best_avg = history[0]["val_avg"]
    best_params = params.copy()

    shapes = {
        "A_desc": params.A_desc.shape,
        "A_obj": params.A_obj.shape,
        "A_img": params.A_img.shape,
        "log_tau": (),
    }
    adam = _Adam(shapes, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.shape[0] < 2:
                continue
            loss, grads = batch_gradients(
                u_desc[idx], u_obj[idx], u_img[idx], params,
                vision_weight=config.vision_weight, symmetric=config.symmetric,
            )
            losses.append(loss)
            values = {
                "A_desc": params.A_desc,
                "A_obj": params.A_obj,
                "A_img": params.A_img,
                "log_tau": np.float64(params.log_tau),
            }
            updated = adam.step(values, grads)
            params = AdapterParams(
                A_desc=updated["A_desc"],
                A_obj=updated["A_obj"],
                A_img=updated["A_img"],
                log_tau=float(updated["log_tau"]),
            )
        metrics = validate(params)
        avg = sum(metrics[k] for k in ks) / len(ks)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        **{f"val_r{k}": metrics[k] for k in ks}, "val_avg": avg})
        if avg > best_avg:
            best_avg = avg
            best_params = params.copy()
    return best_params, history


# ---- checkpoints --------------------------------------------------------------------


def save_checkpoint(params: AdapterParams, path: str | Path, metadata: dict | None = None):
    """Write adapters to the binary store format plus a JSON sidecar.

    Matrices are stored flattened; the store format wants one shared record
    length, so the temperature rides in a padded record with the scalar at
    index 0.
    """
    dim = params.dim
    flat = dim * dim
    store = EmbeddingStore(dim=flat)
    store.put("A_desc", params.A_desc.astype(np.float32).reshape(flat))
    store.put("A_obj", params.A_obj.astype(np.float32).reshape(flat))
    store.put("A_img", params.A_img.astype(np.float32).reshape(flat))
    tau_record = np.zeros(flat, dtype=np.float32)
    tau_record[0] = np.float32(params.log_tau)
    store.put("log_tau", tau_record)
    write_store(store, path)
    meta = {"dim": dim, "log_tau": params.log_tau}
    if metadata:
        meta.update(metadata)
    sidecar = Path(str(path) + ".meta.json")
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> AdapterParams:
    store = read_store(path)
    dim = math.isqrt(store.dim)
    if dim * dim != store.dim or dim < 2:
        raise FormatError(f"checkpoint record length {store.dim} is not a square dimension")
    matrices = {}
    for key in ("A_desc", "A_obj", "A_img", "log_tau"):
        if key not in store.records:
            raise FormatError(f"checkpoint is missing record {key!r}")
        matrices[key] = store.records[key]
    return AdapterParams(
        A_desc=matrices["A_desc"].astype(np.float64).reshape(dim, dim),
        A_obj=matrices["A_obj"].astype(np.float64).reshape(dim, dim),
        A_img=matrices["A_img"].astype(np.float64).reshape(dim, dim),
        log_tau=float(matrices["log_tau"][0]),
    )


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)

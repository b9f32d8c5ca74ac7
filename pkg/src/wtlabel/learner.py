"""Small multi-gate mixture-of-experts learner on id embeddings.

The model embeds user id, video id, and duration bin, concatenates the
three vectors, and feeds them to E shared experts (two affine layers
with a smooth gaussian-gated nonlinearity between). Each task owns a softmax gate over the experts and
an affine head on the gated mixture. Everything is plain float64 numpy
with hand-written gradients and momentum-free SGD, sized for a desk
dataset rather than a production one.

Losses:
  squared_error       mean squared difference on a real target
  logistic            binary cross-entropy on a sigmoid score
  weighted_logistic   the same with positives weighted by watch
                      seconds; exp(score) then estimates watch time
  ordinal_cumulative  K-1 cumulative binary targets 1{group > k} with
                      summed cross-entropy over one shared body

Watch-time back-conversion depends on the task: direct regression is
clamped at zero, odds exponentiate, rank-space scores are mapped to the
group whose prefix interval contains them and answer with that group's
median training watch time (per duration bin for bin-scoped labels).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .core import DurationBins, InteractionTable, as_table, make_duration_bins
from .errors import (
    ConfigInvalid,
    DegenerateLabels,
    EmptyDataset,
    MissingInverseMap,
    MissingLabelColumn,
    NonFiniteLoss,
    SerializationError,
)

CHECKPOINT_MAGIC = b"WLMD"
CHECKPOINT_VERSION = 1

LOSSES = ("squared_error", "logistic", "weighted_logistic", "ordinal_cumulative")

# rank-space label columns and whether their groups are duration-bin scoped
QUANTILE_SCOPE = {"wpr": False, "ew_wpr": False, "wpr_d": True, "ef_wpr": True}


@dataclass(frozen=True)
class ModelArch:
    d_embed: int = 16
    n_experts: int = 3
    hidden: int = 32

    def validate(self) -> None:
        if min(self.d_embed, self.n_experts, self.hidden) < 1:
            raise ConfigInvalid("architecture sizes must be >= 1")


@dataclass(frozen=True)
class TaskConfig:
    target: str
    loss: str
    weight: float = 1.0
    name: str = ""

    def resolved_name(self) -> str:
        return self.name or self.target


@dataclass(frozen=True)
class ResolvedTask:
    name: str
    target: str
    loss: str
    weight: float
    n_out: int
    kind: str  # seconds | odds | binary | quantile | playing_rate | ordinal
    per_bin: bool


@dataclass(frozen=True)
class OptimizerConfig:
    lr_embed: float = 0.05
    lr_dense: float = 0.005
    batch_size: int = 256
    epochs: int = 10
    seed: int = 0


@dataclass
class WprInverse:
    """Maps rank-space scores back to representative watch seconds."""

    prefix: np.ndarray        # ascending group upper labels
    reps: np.ndarray          # (n_bins or 1, n_groups) median seconds
    per_bin: bool

    def lookup(self, scores: np.ndarray, bin_rows: Optional[np.ndarray]) -> np.ndarray:
        r = np.clip(np.asarray(scores, dtype=np.float64), 1e-12, 1.0)
        idx = np.searchsorted(self.prefix, r, side="left")
        idx = np.minimum(idx, len(self.prefix) - 1)
        if self.per_bin:
            if bin_rows is None:
                raise MissingInverseMap("bin-scoped inverse needs duration bins")
            rows = np.minimum(bin_rows, self.reps.shape[0] - 1)
        else:
            rows = np.zeros(len(r), dtype=np.int64)
        return self.reps[rows, idx]


@dataclass
class Model:
    arch: ModelArch
    tasks: tuple[ResolvedTask, ...]
    params: dict[str, np.ndarray]
    user_index: dict[str, int]
    video_index: dict[str, int]
    bins: DurationBins
    inverses: dict[str, WprInverse] = field(default_factory=dict)

    def n_parameters(self) -> int:
        return sum(int(p.size) for p in self.params.values())


def resolve_tasks(
    tasks: Sequence[TaskConfig],
    columns: Mapping[str, np.ndarray],
) -> tuple[ResolvedTask, ...]:
    if not tasks:
        raise ConfigInvalid("need at least one task")
    out = []
    seen = set()
    for t in tasks:
        if t.loss not in LOSSES:
            raise ConfigInvalid(f"unknown loss {t.loss!r}")
        name = t.resolved_name()
        if name in seen:
            raise ConfigInvalid(f"duplicate task name {name!r}")
        seen.add(name)
        if t.target not in columns:
            raise MissingLabelColumn(f"task {name}: no label column {t.target!r}")
        col = np.asarray(columns[t.target], dtype=np.float64)
        n_out = 1
        if t.loss == "ordinal_cumulative":
            kind = "ordinal"
            n_groups = len(np.unique(col))
            if n_groups < 2:
                raise DegenerateLabels(
                    f"task {name}: ordinal target has {n_groups} distinct value(s)"
                )
            n_out = n_groups - 1
        elif t.loss == "weighted_logistic":
            kind = "odds"
        elif t.loss == "logistic":
            kind = "binary"
        elif t.target in QUANTILE_SCOPE:
            kind = "quantile"
        elif t.target == "playing_rate":
            kind = "playing_rate"
        else:
            kind = "seconds"
        out.append(
            ResolvedTask(
                name=name,
                target=t.target,
                loss=t.loss,
                weight=float(t.weight),
                n_out=n_out,
                kind=kind,
                per_bin=QUANTILE_SCOPE.get(t.target, False),
            )
        )
    return tuple(out)


def init_model(
    arch: ModelArch,
    tasks: Sequence[ResolvedTask],
    n_users: int,
    n_videos: int,
    n_bins: int,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    """Fresh parameter dict. Dense weights are uniform in
    +-sqrt(6/fan_in), embeddings in +-sqrt(3/d) (unit-variance rows),
    biases zero. One fallback row per table catches unseen ids."""
    arch.validate()
    d = arch.d_embed
    in_dim = 3 * d

    def uni(shape, fan_in):
        s = np.sqrt(6.0 / fan_in)
        return rng.uniform(-s, s, size=shape)

    def emb(rows):
        s = np.sqrt(3.0 / d)
        return rng.uniform(-s, s, size=(rows, d))

    params: dict[str, np.ndarray] = {
        "emb_user": emb(n_users + 1),
        "emb_video": emb(n_videos + 1),
        "emb_bin": emb(n_bins + 1),
    }
    for e in range(arch.n_experts):
        params[f"expert{e}_w1"] = uni((arch.hidden, in_dim), in_dim)
        params[f"expert{e}_b1"] = np.zeros(arch.hidden)
        params[f"expert{e}_w2"] = uni((arch.hidden, arch.hidden), arch.hidden)
        params[f"expert{e}_b2"] = np.zeros(arch.hidden)
    for t in tasks:
        params[f"gate_{t.name}_w"] = uni((arch.n_experts, in_dim), in_dim)
        params[f"gate_{t.name}_b"] = np.zeros(arch.n_experts)
        params[f"head_{t.name}_w"] = uni((t.n_out, arch.hidden), arch.hidden)
        params[f"head_{t.name}_b"] = np.zeros(t.n_out)
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative of a * Phi(a) with the exact gaussian CDF."""
    cdf = ndtr(a)
    pdf = np.exp(-0.5 * a * a) * _INV_SQRT_2PI
    return a * cdf, cdf + a * pdf


def forward(
    params: Mapping[str, np.ndarray],
    arch: ModelArch,
    tasks: Sequence[ResolvedTask],
    user_rows: np.ndarray,
    video_rows: np.ndarray,
    bin_rows: np.ndarray,
):
    """Scores per task plus the cache the backward pass needs."""
    x = np.concatenate(
        [
            params["emb_user"][user_rows],
            params["emb_video"][video_rows],
            params["emb_bin"][bin_rows],
        ],
        axis=1,
    )
    hs = []
    dacts = []
    outs = []
    for e in range(arch.n_experts):
        a = x @ params[f"expert{e}_w1"].T + params[f"expert{e}_b1"]
        # a gaussian-gated unit; its curvature at the origin lets the
        # experts pick up embedding cross terms from the first step,
        # which an odd nonlinearity like tanh cannot do
        h, dh = _gelu(a)
        hs.append(h)
        dacts.append(dh)
        outs.append(h @ params[f"expert{e}_w2"].T + params[f"expert{e}_b2"])
    expert_out = np.stack(outs, axis=0)  # (E, B, hidden)
    scores = {}
    gates = {}
    mixed = {}
    for t in tasks:
        logits = x @ params[f"gate_{t.name}_w"].T + params[f"gate_{t.name}_b"]
        logits = logits - logits.max(axis=1, keepdims=True)
        ex = np.exp(logits)
        p = ex / ex.sum(axis=1, keepdims=True)
        mix = np.einsum("be,ebh->bh", p, expert_out)
        scores[t.name] = mix @ params[f"head_{t.name}_w"].T + params[f"head_{t.name}_b"]
        gates[t.name] = p
        mixed[t.name] = mix
    cache = (x, hs, dacts, expert_out, gates, mixed, user_rows, video_rows, bin_rows)
    return scores, cache


def _task_loss(
    task: ResolvedTask,
    s: np.ndarray,
    targets: np.ndarray,
    weights: Optional[np.ndarray],
) -> tuple[float, np.ndarray]:
    """Unweighted mean loss and d(loss)/d(score) for one task."""
    b = s.shape[0]
    if task.loss == "squared_error":
        diff = s[:, 0] - targets
        loss = float(np.mean(diff * diff))
        ds = (2.0 / b) * diff[:, None]
        return loss, ds
    if task.loss in ("logistic", "weighted_logistic"):
        sv = s[:, 0]
        t = targets
        w = weights if weights is not None else np.ones_like(sv)
        loss = float(np.mean(w * t * _softplus(-sv) + (1.0 - t) * _softplus(sv)))
        sig = _sigmoid(sv)
        ds = ((t * w * (sig - 1.0) + (1.0 - t) * sig) / b)[:, None]
        return loss, ds
    # ordinal_cumulative: targets holds the 0-based group index
    k = task.n_out
    z = (targets[:, None] > np.arange(k)[None, :]).astype(np.float64)
    loss = float(np.mean(np.sum(z * _softplus(-s) + (1.0 - z) * _softplus(s), axis=1)))
    ds = (_sigmoid(s) - z) / b
    return loss, ds


def _backward(
    params: Mapping[str, np.ndarray],
    arch: ModelArch,
    tasks: Sequence[ResolvedTask],
    cache,
    dscores: Mapping[str, np.ndarray],
) -> dict[str, np.ndarray]:
    x, hs, dacts, expert_out, gates, mixed, user_rows, video_rows, bin_rows = cache
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_expert_out = np.zeros_like(expert_out)
    dx = np.zeros_like(x)
    for t in tasks:
        ds = dscores[t.name]
        grads[f"head_{t.name}_w"] += ds.T @ mixed[t.name]
        grads[f"head_{t.name}_b"] += ds.sum(axis=0)
        dmix = ds @ params[f"head_{t.name}_w"]
        p = gates[t.name]
        dp = np.einsum("bh,ebh->be", dmix, expert_out)
        d_expert_out += p.T[:, :, None] * dmix[None, :, :]
        dlogits = p * (dp - (dp * p).sum(axis=1, keepdims=True))
        grads[f"gate_{t.name}_w"] += dlogits.T @ x
        grads[f"gate_{t.name}_b"] += dlogits.sum(axis=0)
        dx += dlogits @ params[f"gate_{t.name}_w"]
    for e in range(arch.n_experts):
        doe = d_expert_out[e]
        h = hs[e]
        grads[f"expert{e}_w2"] += doe.T @ h
        grads[f"expert{e}_b2"] += doe.sum(axis=0)
        dh = doe @ params[f"expert{e}_w2"]
        da = dh * dacts[e]
        grads[f"expert{e}_w1"] += da.T @ x
        grads[f"expert{e}_b1"] += da.sum(axis=0)
        dx += da @ params[f"expert{e}_w1"]
    d = arch.d_embed
    np.add.at(grads["emb_user"], user_rows, dx[:, :d])
    np.add.at(grads["emb_video"], video_rows, dx[:, d : 2 * d])
    np.add.at(grads["emb_bin"], bin_rows, dx[:, 2 * d :])
    return grads


@dataclass
class TrainData:
    """Feature and target arrays aligned by record."""

    user_rows: np.ndarray
    video_rows: np.ndarray
    bin_rows: np.ndarray
    duration_s: np.ndarray
    watch_time_s: np.ndarray
    targets: dict[str, np.ndarray]      # task name -> target vector
    wlr_weights: dict[str, np.ndarray]  # task name -> weight vector

    @property
    def n(self) -> int:
        return len(self.user_rows)


def _prepare_targets(
    tasks: Sequence[ResolvedTask],
    columns: Mapping[str, np.ndarray],
    watch: np.ndarray,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Target vectors per task, positive weights for weighted logistic,
    and the observed rank prefixes per ordinal task."""
    targets: dict[str, np.ndarray] = {}
    weights: dict[str, np.ndarray] = {}
    prefixes: dict[str, np.ndarray] = {}
    for t in tasks:
        col = np.asarray(columns[t.target], dtype=np.float64)
        if t.loss == "ordinal_cumulative":
            prefix = np.unique(col)
            prefixes[t.name] = prefix
            targets[t.name] = np.searchsorted(prefix, col).astype(np.float64)
        else:
            targets[t.name] = col
        if t.loss == "weighted_logistic":
            weights[t.name] = np.where(col == 1.0, watch, 1.0)
    return targets, weights, prefixes


def build_train_data(
    table: InteractionTable,
    columns: Mapping[str, np.ndarray],
    tasks: Sequence[ResolvedTask],
    user_index: Mapping[str, int],
    video_index: Mapping[str, int],
    bins: DurationBins,
) -> TrainData:
    n_u = len(user_index)
    n_v = len(video_index)
    user_rows = np.asarray([user_index.get(u, n_u) for u in table.user_id], dtype=np.int64)
    video_rows = np.asarray([video_index.get(v, n_v) for v in table.video_id], dtype=np.int64)
    bin_rows = bins.bin_of_many(table.duration_s)
    targets, weights, _ = _prepare_targets(tasks, columns, table.watch_time_s)
    return TrainData(
        user_rows,
        video_rows,
        bin_rows,
        table.duration_s,
        table.watch_time_s,
        targets,
        weights,
    )


def train(
    model: Model,
    data: TrainData,
    opt: OptimizerConfig,
    rng: Optional[np.random.Generator] = None,
) -> list[tuple[int, str, float]]:
    """SGD over shuffled minibatches. Returns (epoch, task, loss) rows
    holding each task's unweighted mean loss per epoch."""
    if data.n == 0:
        raise EmptyDataset("no training records")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(opt.seed))
    dense_keys = [k for k in model.params if not k.startswith("emb_")]
    embed_keys = ["emb_user", "emb_video", "emb_bin"]
    trace: list[tuple[int, str, float]] = []
    for epoch in range(1, opt.epochs + 1):
        perm = rng.permutation(data.n)
        sums = {t.name: 0.0 for t in model.tasks}
        for start in range(0, data.n, opt.batch_size):
            take = perm[start : start + opt.batch_size]
            scores, cache = forward(
                model.params,
                model.arch,
                model.tasks,
                data.user_rows[take],
                data.video_rows[take],
                data.bin_rows[take],
            )
            dscores = {}
            total = 0.0
            for t in model.tasks:
                w = data.wlr_weights.get(t.name)
                loss, ds = _task_loss(
                    t,
                    scores[t.name],
                    data.targets[t.name][take],
                    None if w is None else w[take],
                )
                total += t.weight * loss
                dscores[t.name] = ds * t.weight
                sums[t.name] += loss * len(take)
            if not np.isfinite(total):
                raise NonFiniteLoss(
                    f"epoch {epoch}, batch at {start}: loss became {total}"
                )
            grads = _backward(model.params, model.arch, model.tasks, cache, dscores)
            for k in dense_keys:
                model.params[k] -= opt.lr_dense * grads[k]
            for k in embed_keys:
                model.params[k] -= opt.lr_embed * grads[k]
        for t in model.tasks:
            trace.append((epoch, t.name, sums[t.name] / data.n))
    return trace


def _loss_total(
    params: Mapping[str, np.ndarray],
    arch: ModelArch,
    tasks: Sequence[ResolvedTask],
    data: TrainData,
    take: np.ndarray,
) -> float:
    scores, _ = forward(
        params, arch, tasks, data.user_rows[take], data.video_rows[take], data.bin_rows[take]
    )
    total = 0.0
    for t in tasks:
        w = data.wlr_weights.get(t.name)
        loss, _ = _task_loss(
            t, scores[t.name], data.targets[t.name][take], None if w is None else w[take]
        )
        total += t.weight * loss
    return total


def gradient_check(
    model: Model,
    data: TrainData,
    n_probes: int = 120,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Largest relative error between analytic and central-difference
    gradients over randomly probed parameter coordinates."""
    rng = np.random.Generator(np.random.PCG64(seed))
    take = np.arange(min(data.n, 256))
    scores, cache = forward(
        model.params,
        model.arch,
        model.tasks,
        data.user_rows[take],
        data.video_rows[take],
        data.bin_rows[take],
    )
    dscores = {}
    for t in model.tasks:
        w = data.wlr_weights.get(t.name)
        _, ds = _task_loss(
            t, scores[t.name], data.targets[t.name][take], None if w is None else w[take]
        )
        dscores[t.name] = ds * t.weight
    grads = _backward(model.params, model.arch, model.tasks, cache, dscores)

    names = sorted(model.params)
    sizes = np.asarray([model.params[k].size for k in names])
    cum = np.cumsum(sizes)
    worst = 0.0
    for _ in range(n_probes):
        flat = int(rng.integers(0, cum[-1]))
        which = int(np.searchsorted(cum, flat, side="right"))
        offset = flat - (cum[which - 1] if which else 0)
        name = names[which]
        p = model.params[name]
        idx = np.unravel_index(offset, p.shape)
        keep = p[idx]
        p[idx] = keep + step
        up = _loss_total(model.params, model.arch, model.tasks, data, take)
        p[idx] = keep - step
        down = _loss_total(model.params, model.arch, model.tasks, data, take)
        p[idx] = keep
        numeric = (up - down) / (2.0 * step)
        analytic = grads[name][idx]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


def _group_medians(values: np.ndarray, group_idx: np.ndarray, n_groups: int) -> np.ndarray:
    """Median of values per group; NaN for empty groups."""
    out = np.full(n_groups, np.nan)
    order = np.argsort(group_idx, kind="stable")
    sorted_groups = group_idx[order]
    bounds = np.searchsorted(sorted_groups, np.arange(n_groups + 1))
    for g in range(n_groups):
        lo, hi = bounds[g], bounds[g + 1]
        if hi > lo:
            out[g] = np.median(values[order[lo:hi]])
    return out


def build_wpr_inverse(
    label_col: np.ndarray,
    watch: np.ndarray,
    bin_rows: Optional[np.ndarray],
    per_bin: bool,
    n_bins: int,
) -> WprInverse:
    """Representative watch seconds per rank group, median-based.

    Groups are the distinct label values observed in training. For
    bin-scoped labels each duration bin gets its own row; bins missing
    a group borrow the global representative."""
    prefix = np.unique(np.asarray(label_col, dtype=np.float64))
    gidx = np.searchsorted(prefix, label_col)
    g = len(prefix)
    global_reps = _group_medians(watch, gidx, g)
    # every observed label value has at least one record
    if per_bin:
        if bin_rows is None:
            raise MissingInverseMap("bin-scoped inverse needs duration bins")
        reps = np.empty((n_bins, g))
        for b in range(n_bins):
            mask = bin_rows == b
            if mask.any():
                row = _group_medians(watch[mask], gidx[mask], g)
            else:
                row = np.full(g, np.nan)
            reps[b] = np.where(np.isnan(row), global_reps, row)
    else:
        reps = global_reps[None, :]
    return WprInverse(prefix=prefix, reps=reps, per_bin=per_bin)


def fit(
    table: InteractionTable,
    columns: Mapping[str, np.ndarray],
    tasks: Sequence[TaskConfig],
    arch: ModelArch = ModelArch(),
    opt: OptimizerConfig = OptimizerConfig(),
    bins_b: int = 30,
    bins_min_size: int = 20,
) -> tuple[Model, list[tuple[int, str, float]]]:
    """Train a fresh model on a labeled table. One seed (opt.seed)
    drives initialization and batch shuffling."""
    table = as_table(table)
    if table.n == 0:
        raise EmptyDataset("no training records")
    full_columns = dict(columns)
    full_columns.setdefault("watch_time_s", table.watch_time_s)
    resolved = resolve_tasks(tasks, full_columns)
    bins = make_duration_bins(table, bins_b, bins_min_size)
    user_index = {u: i for i, u in enumerate(sorted(set(table.user_id)))}
    video_index = {v: i for i, v in enumerate(sorted(set(table.video_id)))}
    rng = np.random.Generator(np.random.PCG64(opt.seed))
    params = init_model(
        arch, resolved, len(user_index), len(video_index), bins.n_bins, rng
    )
    model = Model(
        arch=arch,
        tasks=resolved,
        params=params,
        user_index=user_index,
        video_index=video_index,
        bins=bins,
    )
    data = build_train_data(table, full_columns, resolved, user_index, video_index, bins)
    trace = train(model, data, opt, rng)
    bin_rows = data.bin_rows
    for t in resolved:
        if t.kind in ("quantile", "ordinal"):
            model.inverses[t.name] = build_wpr_inverse(
                np.asarray(full_columns[t.target], dtype=np.float64),
                table.watch_time_s,
                bin_rows,
                t.per_bin,
                bins.n_bins,
            )
    return model, trace


def _feature_rows(model: Model, table: InteractionTable):
    n_u = len(model.user_index)
    n_v = len(model.video_index)
    user_rows = np.asarray(
        [model.user_index.get(u, n_u) for u in table.user_id], dtype=np.int64
    )
    video_rows = np.asarray(
        [model.video_index.get(v, n_v) for v in table.video_id], dtype=np.int64
    )
    bin_rows = model.bins.bin_of_many(table.duration_s)
    return user_rows, video_rows, bin_rows


def score_records(model: Model, table: InteractionTable) -> dict[str, np.ndarray]:
    """Raw score per task plus a fused ranking score.

    For ranking, logistic tasks contribute their probability and the
    ordinal task its normalized expected group; other tasks contribute
    the raw score. The fused entry is the equal-weight mean."""
    table = as_table(table)
    user_rows, video_rows, bin_rows = _feature_rows(model, table)
    scores, _ = forward(model.params, model.arch, model.tasks, user_rows, video_rows, bin_rows)
    out: dict[str, np.ndarray] = {}
    ranking = []
    for t in model.tasks:
        s = scores[t.name]
        if t.kind == "ordinal":
            out[t.name] = _sigmoid(s).sum(axis=1)
            ranking.append(out[t.name] / t.n_out)
        else:
            out[t.name] = s[:, 0]
            if t.kind == "binary":
                ranking.append(_sigmoid(s[:, 0]))
            else:
                ranking.append(s[:, 0])
    out["fused"] = np.mean(np.stack(ranking, axis=0), axis=0)
    return out


def predict_watch_time(
    model: Model,
    table: InteractionTable,
    task_name: Optional[str] = None,
) -> np.ndarray:
    """Watch-time estimate in seconds from one task's score."""
    table = as_table(table)
    tasks = {t.name: t for t in model.tasks}
    if task_name is None:
        task = model.tasks[0]
    elif task_name in tasks:
        task = tasks[task_name]
    else:
        raise ConfigInvalid(f"no task named {task_name!r}")
    user_rows, video_rows, bin_rows = _feature_rows(model, table)
    scores, _ = forward(
        model.params, model.arch, model.tasks, user_rows, video_rows, bin_rows
    )
    s = scores[task.name]
    if task.kind == "seconds":
        return np.maximum(s[:, 0], 0.0)
    if task.kind == "odds":
        # scores above ~700 would overflow; the cap is far beyond any
        # meaningful watch time already
        return np.exp(np.minimum(s[:, 0], 60.0))
    if task.kind == "playing_rate":
        return np.clip(s[:, 0], 0.0, 1.0) * table.duration_s
    if task.kind == "binary":
        raise ConfigInvalid(f"task {task.name} is binary; it has no watch-time scale")
    inverse = model.inverses.get(task.name)
    if inverse is None:
        raise MissingInverseMap(f"task {task.name} has no inverse map")
    if task.kind == "ordinal":
        expected = _sigmoid(s).sum(axis=1)
        g = np.clip(np.round(expected), 0, len(inverse.prefix) - 1).astype(np.int64)
        return inverse.reps[0, g]
    return inverse.lookup(s[:, 0], bin_rows)


# checkpoint io

def save_model(model: Model, path: str) -> None:
    meta = {
        "arch": {
            "d_embed": model.arch.d_embed,
            "n_experts": model.arch.n_experts,
            "hidden": model.arch.hidden,
        },
        "tasks": [
            {
                "name": t.name,
                "target": t.target,
                "loss": t.loss,
                "weight": t.weight,
                "n_out": t.n_out,
                "kind": t.kind,
                "per_bin": t.per_bin,
            }
            for t in model.tasks
        ],
        "users": sorted(model.user_index, key=model.user_index.get),
        "videos": sorted(model.video_index, key=model.video_index.get),
        "inverses": {
            name: {"per_bin": inv.per_bin} for name, inv in model.inverses.items()
        },
    }
    arrays: list[tuple[str, np.ndarray]] = [("bins_boundaries", model.bins.boundaries),
                                            ("bins_counts", model.bins.counts.astype(np.float64))]
    for k in sorted(model.params):
        arrays.append((f"param:{k}", model.params[k]))
    for name in sorted(model.inverses):
        inv = model.inverses[name]
        arrays.append((f"inv:{name}:prefix", inv.prefix))
        arrays.append((f"inv:{name}:reps", inv.reps))
    blob = [struct.pack("<4sI", CHECKPOINT_MAGIC, CHECKPOINT_VERSION)]
    enc = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob.append(struct.pack("<Q", len(enc)))
    blob.append(enc)
    blob.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        blob.append(struct.pack("<H", len(nb)))
        blob.append(nb)
        blob.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            blob.append(struct.pack("<Q", dim))
        blob.append(arr.tobytes())
    from .dataio import atomic_write_bytes

    atomic_write_bytes(path, b"".join(blob))


def load_model(path: str) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != CHECKPOINT_MAGIC:
        raise SerializationError(f"{path}: not a model checkpoint")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise SerializationError(f"{path}: unsupported checkpoint version {version}")
    (jlen,) = struct.unpack_from("<Q", raw, 8)
    off = 16
    meta = json.loads(raw[off : off + jlen].decode("utf-8"))
    off += jlen
    (n_arrays,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = []
        for _ in range(ndim):
            (dim,) = struct.unpack_from("<Q", raw, off)
            off += 8
            shape.append(dim)
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, np.float64, size, off).copy().reshape(shape)
        off += 8 * size
        arrays[name] = arr
    arch = ModelArch(**meta["arch"])
    tasks = tuple(ResolvedTask(**t) for t in meta["tasks"])
    boundaries = arrays["bins_boundaries"]
    counts = arrays["bins_counts"].astype(np.int64)
    boundaries.setflags(write=False)
    counts.setflags(write=False)
    bins = DurationBins(boundaries, counts)
    params = {
        name[len("param:") :]: arr
        for name, arr in arrays.items()
        if name.startswith("param:")
    }
    inverses = {}
    for name, info in meta.get("inverses", {}).items():
        inverses[name] = WprInverse(
            prefix=arrays[f"inv:{name}:prefix"],
            reps=arrays[f"inv:{name}:reps"],
            per_bin=bool(info["per_bin"]),
        )
    return Model(
        arch=arch,
        tasks=tasks,
        params=params,
        user_index={u: i for i, u in enumerate(meta["users"])},
        video_index={v: i for i, v in enumerate(meta["videos"])},
        bins=bins,
        inverses=inverses,
    )

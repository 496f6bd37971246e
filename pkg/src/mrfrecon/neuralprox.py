"""Learned proximal operator: encoder to maps, frozen Bloch decoder to TSMI.

The prox is decoder(encoder(g)) scaled by the predicted proton density; the
encoder is a compact convolutional net with bounded outputs mapping straight
to physical ranges, the decoder a small per-voxel MLP fit to compressed EPG
responses. Unrolled training differentiates through T proximal gradient
iterations, including the forward/adjoint acquisition operators, with the
encoder weights shared across iterations and one trainable log step size per
iteration.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Adam,
    Param,
    Tape,
    c2r_channels,
    c2r_stack,
    r2c_channels,
)
from .dictionary import compress
from .epg import simulate_epg_batch
from .errors import TrainingFailure
from .maps import QMaps

# bounded output activations of the encoder; every prox output is physical
T1_BOUNDS_MS = (100.0, 4000.0)
T2_BOUNDS_MS = (10.0, 600.0)
PD_BOUNDS = (0.0, 2.0)

# map-loss normalization so beta weights compare like quantities
MAP_NORMS = (T1_BOUNDS_MS[1], T2_BOUNDS_MS[1], 1.0)


@dataclass
class TrainConfig:
    """Loss weights and optimizer settings for unrolled training."""

    beta: tuple = (1.0, 0.3, 0.6)
    lam: float = 1e-3
    epochs: int = 500
    lr: float = 1e-3
    seed: int = 0
    batch_size: int = 1

    def __post_init__(self):
        if any(b < 0 for b in self.beta) or self.lam < 0:
            raise ValueError("loss weights must be >= 0")


class EncoderNet:
    """3-layer same-size CNN, widths [2s -> w -> w -> 3], bounded outputs.

    Optional squeeze-excite channel attention after the second convolution.
    """

    def __init__(self, s, width=32, seed=0, attention=False):
        self.s = s
        self.width = width
        self.attention = attention
        rng = np.random.default_rng(seed)

        def conv_init(cout, cin):
            scale = np.sqrt(2.0 / (cin * 9))
            return rng.standard_normal((cout, cin, 3, 3)) * scale

        self.w1 = Param("enc_w1", conv_init(width, 2 * s))
        self.b1 = Param("enc_b1", np.zeros(width))
        self.w2 = Param("enc_w2", conv_init(width, width))
        self.b2 = Param("enc_b2", np.zeros(width))
        self.w3 = Param("enc_w3", conv_init(3, width))
        self.b3 = Param("enc_b3", np.zeros(3))
        if attention:
            r = max(width // 4, 1)
            self.se_w1 = Param(
                "enc_se_w1", rng.standard_normal((width, r)) / np.sqrt(width)
            )
            self.se_b1 = Param("enc_se_b1", np.zeros(r))
            self.se_w2 = Param(
                "enc_se_w2", rng.standard_normal((r, width)) / np.sqrt(r)
            )
            self.se_b2 = Param("enc_se_b2", np.zeros(width))

        lo = np.array([T1_BOUNDS_MS[0], T2_BOUNDS_MS[0], PD_BOUNDS[0]])
        hi = np.array([T1_BOUNDS_MS[1], T2_BOUNDS_MS[1], PD_BOUNDS[1]])
        self._lo = lo[:, None, None]
        self._hi = hi[:, None, None]

    def parameters(self):
        params = [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
        if self.attention:
            params += [self.se_w1, self.se_b1, self.se_w2, self.se_b2]
        return params

    def apply(self, tape, x):
        """x: (2s, H, W) node -> (3, H, W) node of bounded T1/T2/PD maps."""
        h = tape.leaky_relu(tape.conv2d(x, tape.leaf(self.w1), tape.leaf(self.b1)))
        h = tape.leaky_relu(tape.conv2d(h, tape.leaf(self.w2), tape.leaf(self.b2)))
        if self.attention:
            z = tape.reshape(tape.spatial_mean(h), (1, self.width))
            z = tape.leaky_relu(
                tape.add(tape.matmul(z, tape.leaf(self.se_w1)), tape.leaf(self.se_b1))
            )
            z = tape.sigmoid(
                tape.add(tape.matmul(z, tape.leaf(self.se_w2)), tape.leaf(self.se_b2))
            )
            gate = tape.reshape(z, (self.width, 1, 1))
            h = tape.mul(h, gate)
        raw = tape.conv2d(h, tape.leaf(self.w3), tape.leaf(self.b3))
        return tape.scaled_sigmoid(raw, self._lo, self._hi)

    def predict_maps(self, tsmi):
        """Inference path: complex (s, H, W) TSMI -> QMaps."""
        tape = Tape()
        x = tape.constant(c2r_channels(np.asarray(tsmi)))
        m = self.apply(tape, x).value
        h, w = m.shape[1:]
        return QMaps(
            t1_ms=m[0], t2_ms=m[1], pd=m[2], mask=np.ones((h, w), dtype=bool)
        )


class BlochDecoderNet:
    """Per-voxel MLP [2 -> hidden -> hidden -> 2s] with tanh activations.

    Input (T1, T2) in ms, log-transformed and affinely mapped to about [-1, 1];
    output is the compressed unit-PD fingerprint as stacked real/imag parts,
    multiplied by a fixed output scale fit during pretraining. Proton density
    multiplies outside the network, so PD linearity is exact.
    """

    def __init__(self, s, hidden=64, seed=0):
        self.s = s
        self.hidden = hidden
        rng = np.random.default_rng(seed)
        self.w1 = Param("dec_w1", rng.standard_normal((2, hidden)) / np.sqrt(2.0))
        self.b1 = Param("dec_b1", np.zeros(hidden))
        self.w2 = Param("dec_w2", rng.standard_normal((hidden, hidden)) / np.sqrt(hidden))
        self.b2 = Param("dec_b2", np.zeros(hidden))
        self.w3 = Param("dec_w3", rng.standard_normal((hidden, 2 * s)) / np.sqrt(hidden))
        self.b3 = Param("dec_b3", np.zeros(2 * s))
        self.output_scale = 1.0
        lo1, hi1 = np.log(T1_BOUNDS_MS)
        lo2, hi2 = np.log(T2_BOUNDS_MS)
        self._mid = (0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2))
        self._half = (0.5 * (hi1 - lo1), 0.5 * (hi2 - lo2))

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def freeze(self):
        for p in self.parameters():
            p.trainable = False

    @property
    def frozen(self):
        return all(not p.trainable for p in self.parameters())

    def apply(self, tape, t1, t2):
        """t1, t2: (n,) nodes in ms -> (n, 2s) node of compressed responses."""
        n = t1.value.shape[0]
        feats = []
        for node, mid, half in zip((t1, t2), self._mid, self._half):
            u = tape.scale(tape.sub(tape.log(node), tape.constant(mid)), 1.0 / half)
            feats.append(tape.reshape(u, (n, 1)))
        h = tape.concat(feats, axis=1)
        h = tape.tanh(tape.add(tape.matmul(h, tape.leaf(self.w1)), tape.leaf(self.b1)))
        h = tape.tanh(tape.add(tape.matmul(h, tape.leaf(self.w2)), tape.leaf(self.b2)))
        out = tape.add(tape.matmul(h, tape.leaf(self.w3)), tape.leaf(self.b3))
        return tape.scale(out, self.output_scale)

    def predict(self, t1_ms, t2_ms):
        """Plain-array inference: (n,) arrays -> (n, 2s) float array."""
        tape = Tape()
        t1 = tape.constant(np.asarray(t1_ms, dtype=float))
        t2 = tape.constant(np.asarray(t2_ms, dtype=float))
        return self.apply(tape, t1, t2).value


class UnrolledModel:
    """Shared encoder + frozen decoder + per-iteration trainable step sizes."""

    def __init__(self, encoder, decoder, log_alpha, iterations):
        self.encoder = encoder
        self.decoder = decoder
        self.log_alpha = log_alpha
        self.iterations = iterations

    @classmethod
    def create(cls, s, iterations, width=32, seed=0, alpha0=1.0, attention=False, hidden=64):
        encoder = EncoderNet(s, width=width, seed=seed, attention=attention)
        decoder = BlochDecoderNet(s, hidden=hidden, seed=seed + 1)
        log_alpha = Param("log_alpha", np.full(iterations, np.log(alpha0)))
        return cls(encoder, decoder, log_alpha, iterations)

    @property
    def step_sizes(self):
        return np.exp(self.log_alpha.value)

    def trainable_parameters(self):
        return self.encoder.parameters() + [self.log_alpha]

    def parameter_count(self):
        """Encoder weights plus one step-size scalar per iteration."""
        enc = sum(p.value.size for p in self.encoder.parameters())
        return enc + self.log_alpha.value.size

    def make_prox(self):
        """Prox callable for the numpy PGD engine."""

        def prox(g):
            tape = Tape()
            g_node = tape.constant(c2r_channels(np.asarray(g)))
            x_node, m_node = prox_nodes(tape, self.encoder, self.decoder, g_node)
            m = m_node.value
            h, w = m.shape[1:]
            maps = QMaps(
                t1_ms=m[0], t2_ms=m[1], pd=m[2], mask=np.ones((h, w), dtype=bool)
            )
            return r2c_channels(x_node.value), maps

        return prox


def prox_nodes(tape, encoder, decoder, g_node):
    """Record Prox = PD * decoder(encoder(g)) on the tape.

    g_node is (2s, H, W); returns (x node (2s, H, W), maps node (3, H, W)).
    """
    m = encoder.apply(tape, g_node)
    _, h, w = m.value.shape
    t1 = tape.reshape(tape.slice_axis0(m, 0, 1), (h * w,))
    t2 = tape.reshape(tape.slice_axis0(m, 1, 2), (h * w,))
    pd = tape.slice_axis0(m, 2, 3)
    dec = decoder.apply(tape, t1, t2)  # (h*w, 2s)
    x = tape.reshape(tape.transpose2d(dec), (2 * decoder.s, h, w))
    if not np.all(np.isfinite(x.value)):
        raise FloatingPointError("non-finite activations in the proximal network")
    return tape.mul(x, pd), m


def neural_prox_apply(model, g):
    """Apply the learned prox to one gradient-updated TSMI.

    Args:
        model: UnrolledModel (or anything with encoder/decoder attributes).
        g: complex (s, H, W).

    Returns:
        (x, QMaps): re-synthesized complex TSMI and the bounded property maps.
    """
    return model.make_prox()(g)


def unrolled_loss_nodes(tape, model, y, op, x0, truth, cfg):
    """Record the unrolled forward pass and its two-term training loss.

    Map loss is evaluated on the final iterate only; the k-space consistency
    term is summed over every iterate. Returns (loss node, final maps node).
    """
    y = np.asarray(y)
    y_stack = c2r_stack(y)
    y_node = tape.constant(y_stack)
    x = tape.constant(c2r_channels(np.asarray(x0)))
    log_alpha = tape.leaf(model.log_alpha)

    hx = tape.apply_linop(x, op)
    ks_terms = []
    m = None
    for t in range(model.iterations):
        resid = tape.sub(y_node, hx)
        upd = tape.apply_linop_adjoint(resid, op)
        alpha = tape.exp(tape.slice_axis0(log_alpha, t, t + 1))
        g = tape.add(x, tape.mul(upd, alpha))
        x, m = prox_nodes(tape, model.encoder, model.decoder, g)
        hx = tape.apply_linop(x, op)
        ks_terms.append(tape.mse(hx, y_stack))

    map_terms = []
    targets = (truth.t1_ms, truth.t2_ms, truth.pd)
    for j in range(3):
        chan = tape.scale(tape.slice_axis0(m, j, j + 1), 1.0 / MAP_NORMS[j])
        map_terms.append(tape.mse(chan, targets[j][None] / MAP_NORMS[j]))

    loss = tape.weighted_sum(
        map_terms + ks_terms, list(cfg.beta) + [cfg.lam] * model.iterations
    )
    return loss, m


def _check_gradients(grads):
    for p, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingFailure(f"non-finite gradient for {p.name}")


def train_unrolled(dataset, op, model, cfg):
    """Train encoder weights and step sizes through T unrolled iterations.

    Args:
        dataset: list of (y, truth QMaps) pairs; PD normalized to about [0, 1].
        op: AcquisitionOperator shared by the dataset.
        model: UnrolledModel with a pretrained, frozen decoder.
        cfg: TrainConfig.

    Returns:
        (model, per-epoch mean loss history). Deterministic for a fixed seed.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if not model.decoder.frozen:
        raise ValueError("decoder must be pretrained and frozen before unrolling")
    samples = [
        (np.asarray(y), op.backproject(y, equalize=False), truth)
        for y, truth in dataset
    ]
    opt = Adam(model.trainable_parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for idx in order:
            y, x0, truth = samples[idx]
            tape = Tape()
            loss, _ = unrolled_loss_nodes(tape, model, y, op, x0, truth, cfg)
            grads = tape.backward(loss)
            _check_gradients(grads)
            opt.step(grads)
            total += float(loss.value)
        history.append(total / len(samples))
        if not np.isfinite(history[-1]) or (
            len(history) > 1 and history[-1] > 1e6 * max(history[0], 1e-300)
        ):
            raise TrainingFailure(f"training diverged: epoch loss {history[-1]:g}")
    return model, history


def pretrain_encoder(dataset, op, encoder, cfg):
    """Supervised baseline training on back-projected TSMIs (map loss only)."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    samples = [
        (c2r_channels(op.backproject(y, equalize=False)), truth)
        for y, truth in dataset
    ]
    opt = Adam(encoder.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for idx in order:
            x0, truth = samples[idx]
            tape = Tape()
            m = encoder.apply(tape, tape.constant(x0))
            targets = (truth.t1_ms, truth.t2_ms, truth.pd)
            terms = []
            for j in range(3):
                chan = tape.scale(tape.slice_axis0(m, j, j + 1), 1.0 / MAP_NORMS[j])
                terms.append(tape.mse(chan, targets[j][None] / MAP_NORMS[j]))
            loss = tape.weighted_sum(terms, list(cfg.beta))
            grads = tape.backward(loss)
            _check_gradients(grads)
            opt.step(grads)
            total += float(loss.value)
        history.append(total / len(samples))
        if not np.isfinite(history[-1]):
            raise TrainingFailure("encoder pretraining diverged")
    return encoder, history


def _sample_offgrid_pairs(rng, n, t1_range, t2_range):
    """Log-uniform (T1, T2) pairs with T2 <= T1, rejection-sampled."""
    t1 = np.empty(n)
    t2 = np.empty(n)
    filled = 0
    while filled < n:
        c1 = np.exp(rng.uniform(np.log(t1_range[0]), np.log(t1_range[1]), n))
        c2 = np.exp(rng.uniform(np.log(t2_range[0]), np.log(t2_range[1]), n))
        ok = c2 <= c1
        take = min(int(ok.sum()), n - filled)
        t1[filled : filled + take] = c1[ok][:take]
        t2[filled : filled + take] = c2[ok][:take]
        filled += take
    return t1, t2


def compressed_response_targets(seq, sub, t1_ms, t2_ms, k_max=None):
    """Oracle targets for the decoder: compressed unit-PD EPG responses."""
    from .epg import DEFAULT_K_MAX

    fps = simulate_epg_batch(
        seq, t1_ms, t2_ms, k_max=DEFAULT_K_MAX if k_max is None else k_max
    )
    cf = compress(fps.T, sub).T  # (n, s) complex
    return np.concatenate([cf.real, cf.imag], axis=1)


def pretrain_bloch_decoder(
    grid,
    sub,
    epochs=400,
    lr=1e-3,
    seed=0,
    n_offgrid=1500,
    batch_size=256,
    val_size=500,
    threshold=0.02,
    hidden=64,
):
    """Fit the decoder MLP to compressed EPG responses.

    Trains on every dictionary atom plus freshly simulated off-grid pairs and
    validates on a held-out off-grid set; raises TrainingFailure when the mean
    relative error does not reach `threshold`. The returned decoder is frozen.
    """
    seq = grid.seq
    if seq is None:
        raise ValueError("dictionary grid does not carry its sequence parameters")
    rng = np.random.default_rng(seed)
    t1r = (float(grid.t1_values_ms[0]), float(grid.t1_values_ms[-1]))
    t2r = (float(grid.t2_values_ms[0]), float(grid.t2_values_ms[-1]))

    raw_atoms = grid.atoms * grid.atom_norms[:, None]
    catoms = raw_atoms @ sub.basis.conj()
    atom_targets = np.concatenate([catoms.real, catoms.imag], axis=1)
    t1_off, t2_off = _sample_offgrid_pairs(rng, n_offgrid, t1r, t2r)
    off_targets = compressed_response_targets(seq, sub, t1_off, t2_off)

    t1_all = np.concatenate([grid.atom_t1_ms, t1_off])
    t2_all = np.concatenate([grid.atom_t2_ms, t2_off])
    targets = np.concatenate([atom_targets, off_targets], axis=0)

    val_t1, val_t2 = _sample_offgrid_pairs(rng, val_size, t1r, t2r)
    val_targets = compressed_response_targets(seq, sub, val_t1, val_t2)

    decoder = BlochDecoderNet(sub.s, hidden=hidden, seed=seed)
    decoder.output_scale = float(np.sqrt(np.mean(targets**2)) * 2.0)
    opt = Adam(decoder.parameters(), lr=lr)
    n = t1_all.shape[0]
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            tape = Tape()
            pred = decoder.apply(
                tape, tape.constant(t1_all[sel]), tape.constant(t2_all[sel])
            )
            loss = tape.mse(pred, targets[sel])
            grads = tape.backward(loss)
            _check_gradients(grads)
            opt.step(grads)
            total += float(loss.value) * sel.size
        history.append(total / n)

    err = decoder_validation_error(decoder, val_t1, val_t2, val_targets)
    if err >= threshold:
        raise TrainingFailure(
            f"decoder pretraining stalled: validation error {err:.4f} >= "
            f"{threshold:g}, final loss {history[-1]:.3e}"
        )
    decoder.freeze()
    return decoder, history


def decoder_validation_error(decoder, t1_ms, t2_ms, targets):
    """Mean per-sample relative L2 error against oracle targets."""
    pred = decoder.predict(t1_ms, t2_ms)
    num = np.linalg.norm(pred - targets, axis=1)
    den = np.linalg.norm(targets, axis=1)
    return float(np.mean(num / den))


def save_model(directory, model, seed=None, train_config=None, loss_history=None):
    """Write an UnrolledModel checkpoint: named weights + JSON manifest."""
    from .tensorfile import save_checkpoint

    arrays = {p.name: p.value for p in model.encoder.parameters()}
    arrays.update({p.name: p.value for p in model.decoder.parameters()})
    arrays["log_alpha"] = model.log_alpha.value
    manifest = {
        "architecture": {
            "s": model.decoder.s,
            "width": model.encoder.width,
            "attention": model.encoder.attention,
            "hidden": model.decoder.hidden,
            "decoder_output_scale": model.decoder.output_scale,
        },
        "iterations": model.iterations,
        "decoder_frozen": model.decoder.frozen,
        "seed": seed,
        "train_config": train_config,
        "loss_history": loss_history,
    }
    save_checkpoint(directory, arrays, manifest)


def load_model(directory):
    """Load an UnrolledModel checkpoint written by save_model."""
    from .tensorfile import load_checkpoint

    arrays, manifest = load_checkpoint(directory)
    arch = manifest["architecture"]
    model = UnrolledModel.create(
        s=arch["s"],
        iterations=manifest["iterations"],
        width=arch["width"],
        attention=arch["attention"],
        hidden=arch["hidden"],
    )
    model.decoder.output_scale = arch["decoder_output_scale"]
    for p in model.encoder.parameters() + model.decoder.parameters():
        p.value = arrays[p.name].astype(np.float64)
    model.log_alpha.value = arrays["log_alpha"].astype(np.float64)
    if manifest.get("decoder_frozen"):
        model.decoder.freeze()
    return model, manifest

"""Independent oracles shared by the unit and acceptance suites."""
import numpy as np

from uwinfer import nn

FD_STEP = 1e-4
KINK_MARGIN = 1e-3


def reference_forward(model, x):
    """Loop-based re-implementation of the network, independent of the kernels."""
    cfg = model.config
    w, b = model.conv_weights.astype(np.float64), model.conv_bias.astype(np.float64)
    out = cfg.conv_out
    z = np.zeros((out, out, cfg.num_filters))
    for i in range(out):
        for j in range(out):
            patch = x[i * cfg.stride:i * cfg.stride + cfg.kernel, j * cfg.stride:j * cfg.stride + cfg.kernel]
            for f in range(cfg.num_filters):
                z[i, j, f] = np.sum(patch * w[f]) + b[f]
    a = np.maximum(z, 0).reshape(-1)
    logits = a @ model.dense_weights.astype(np.float64) + model.dense_bias.astype(np.float64)
    return z, logits


def reference_loss(model, x, label):
    _, logits = reference_forward(model, np.asarray(x, dtype=np.float64))
    m = max(logits)
    probs = [np.exp(v - m) for v in logits]
    p = probs[label] / sum(probs)
    return -np.log(max(p, 1e-12))


def random_triple(rng, min_margin=KINK_MARGIN):
    """Random float64 (model, input, label) whose conv pre-activations stay clear of the ReLU kink."""
    while True:
        n = int(rng.integers(5, 10))
        c = int(rng.integers(2, 5))
        cfg = nn.ModelConfig(n=n, num_classes=c)
        shapes = cfg.tensor_shapes()
        model = nn.Model(cfg, **{k: rng.uniform(-1, 1, s) for k, s in shapes.items()})
        x = rng.uniform(0, 1, (n, n))
        label = int(rng.integers(0, c))
        z, _ = reference_forward(model, x)
        if np.min(np.abs(z)) > min_margin:
            return model, x, label


def extended_loss(tensors, cfg, x, label):
    """Cross-entropy evaluated in extended precision, with its own forward pass."""
    w, b, dw, db = (tensors[k] for k in nn.TENSOR_NAMES)
    windows = np.lib.stride_tricks.sliding_window_view(x, (cfg.kernel, cfg.kernel))
    windows = windows[::cfg.stride, ::cfg.stride]
    z = np.tensordot(windows, w, axes=([2, 3], [1, 2])) + b
    logits = np.maximum(z, 0).reshape(-1) @ dw + db
    shifted = logits - logits.max()
    p = np.exp(shifted[label]) / np.exp(shifted).sum()
    return -np.log(max(p, np.longdouble(1e-12)))


def numeric_gradients(model, x, label, h=FD_STEP):
    """Central differences of the loss w.r.t. every parameter.

    The loss is evaluated in ``np.longdouble``. In float64 the cancellation
    error of (up - down) / 2h is about eps * loss / h ~ 1e-12, which alone
    exceeds a 1e-4 relative tolerance on components near 1e-8.
    """
    tensors = {k: v.astype(np.longdouble) for k, v in model.tensors().items()}
    x = np.asarray(x, dtype=np.longdouble)
    grads = {}
    for name, tensor in tensors.items():
        g = np.zeros(tensor.shape)
        flat = tensor.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = extended_loss(tensors, model.config, x, label)
            flat[i] = old - h
            down = extended_loss(tensors, model.config, x, label)
            flat[i] = old
            g.reshape(-1)[i] = float((up - down) / (2 * h))
        grads[name] = g
    return grads


def relative_errors(analytic, numeric, floor=0.0):
    """Componentwise |a - n| / max(|a|, |n|); pairs with both at or below ``floor`` compare as 0."""
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(n))
    return np.where(scale > floor, np.abs(a - n) / np.where(scale > floor, scale, 1.0), 0.0)

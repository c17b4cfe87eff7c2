"""Complex-valued residual CNN that enhances normalised CSI.

Two residual blocks are chained around the angle-delay transform:

    F   = block1(x) + shortcut1(x)
    out = T⁻¹(block2(T(F)) + shortcut2(T(F)))

Each block is three 3×3 complex convolutions (1 → C → C → 1) with a leaky
ReLU on the real and imaginary parts after the first two. Gradients use the
convention G = ∂L/∂Re + j·∂L/∂Im, so the real view of G is the gradient with
respect to the real and imaginary weight components.
"""

# %% Imports
import copy
import logging
from typing import TypedDict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from isac.config import (
    ADAM_BETAS,
    ADAM_EPSILON,
    HIDDEN_CHANNELS,
    KERNEL_SIZE,
    LEAKY_SLOPE,
    NMSE_FLOOR_DB,
    TrainSection,
)
from isac.estimate import normalize
from isac.numerics import ComplexTensor
from isac.transform import (
    inverse_adjoint,
    isac_inverse,
    isac_transform,
    transform_adjoint,
)

logger = logging.getLogger(__name__)

PAD = KERNEL_SIZE // 2
CSI_NDIM = 2
BATCH_NDIM = 3


class ComplexConvLayer(TypedDict):
    """3×3 complex convolution, kernels out × in × 3 × 3 and one bias per output."""

    kernels: np.ndarray
    bias: np.ndarray


class EnhancerModel(TypedDict):
    """All weights of the two residual blocks."""

    block1: list[ComplexConvLayer]
    shortcut1: ComplexConvLayer
    block2: list[ComplexConvLayer]
    shortcut2: ComplexConvLayer
    hidden_channels: tuple[int, int]
    slope: float


class TrainRecord(TypedDict):
    """Per-epoch NMSE of the enhancer output."""

    epoch: int
    train_nmse_db: float
    eval_nmse_db: float


class TrainingSet(TypedDict):
    """Normalised (input, target) pairs, each stack shaped S × P × N_c."""

    train_inputs: np.ndarray
    train_targets: np.ndarray
    eval_inputs: np.ndarray
    eval_targets: np.ndarray


class AdamState(TypedDict):
    """First and second moment estimates, one pair per parameter array."""

    step: int
    first: list[np.ndarray]
    second: list[np.ndarray]


# %% Layers
def complex_linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Complex affine map y = W·x + b computed from four real products.

    >>> complex_linear(np.array([1.0 + 0j]), np.array([[1j]]), np.zeros(1, dtype=complex))
    array([0.+1.j])
    >>> x = np.array([1 - 2j, 3j, 0.5])
    >>> np.allclose(complex_linear(x, np.eye(3), np.zeros(3)), x)
    True
    >>> rng = np.random.default_rng(0)
    >>> w = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    >>> x = rng.normal(size=4) + 1j * rng.normal(size=4)
    >>> b = rng.normal(size=4) + 1j * rng.normal(size=4)
    >>> bool(np.abs(complex_linear(x, w, b) - (w @ x + b)).max() <= 1e-12)
    True
    >>> complex_linear(x, np.ones((2, 3)), np.zeros(2))
    Traceback (most recent call last):
        ...
    ValueError: Weight matrix (2, 3) does not accept input of length 4

    """
    w = np.asarray(w, dtype=complex)
    x = np.asarray(x, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if w.ndim != CSI_NDIM or w.shape[1] != x.shape[-1] or b.shape != (w.shape[0],):
        raise ValueError(
            f"Weight matrix {w.shape} does not accept input of length {x.shape[-1]}"
        )
    real = w.real @ x.real - w.imag @ x.imag + b.real
    imag = w.real @ x.imag + w.imag @ x.real + b.imag
    return real + 1j * imag


def _windows(x: np.ndarray) -> np.ndarray:
    """Zero-padded 3×3 neighbourhoods of every pixel, shape (..., C, H, W, 3, 3)."""
    widths = [(0, 0)] * (x.ndim - 2) + [(PAD, PAD), (PAD, PAD)]
    padded = np.pad(x, widths)
    return sliding_window_view(padded, (KERNEL_SIZE, KERNEL_SIZE), axis=(-2, -1))


def complex_conv(x: ComplexTensor, layer: ComplexConvLayer) -> ComplexTensor:
    """Same-size complex cross-correlation K*x + b with zero padding 1.

    Real and imaginary parts follow K_r*x_r − K_i*x_i + j(K_r*x_i + K_i*x_r).
    A leading batch axis is allowed.

    Args:
        x: Input tensor, shape (..., C_in, H, W)
        layer: Convolution weights with C_in input channels

    Returns:
        Output tensor, shape (..., C_out, H, W)

    Raises:
        ValueError: If the channel counts disagree

    >>> x = np.arange(12).reshape(1, 3, 4) * (1 - 1j)
    >>> delta = np.zeros((1, 1, 3, 3), dtype=complex)
    >>> delta[0, 0, 1, 1] = 1
    >>> layer = ComplexConvLayer(kernels=delta, bias=np.zeros(1, dtype=complex))
    >>> np.allclose(complex_conv(x, layer), x)
    True
    >>> layer["kernels"] = 1j * delta
    >>> np.allclose(complex_conv(x, layer), 1j * x)
    True

    # Against a nested-loop oracle
    >>> rng = np.random.default_rng(0)
    >>> x = rng.normal(size=(1, 5, 5)) + 1j * rng.normal(size=(1, 5, 5))
    >>> k = rng.normal(size=(1, 1, 3, 3)) + 1j * rng.normal(size=(1, 1, 3, 3))
    >>> padded = np.pad(x[0], 1)
    >>> naive = np.array([
    ...     [sum(k[0, 0, u, v] * padded[r + u, c + v] for u in range(3) for v in range(3))
    ...      for c in range(5)]
    ...     for r in range(5)
    ... ])
    >>> layer = ComplexConvLayer(kernels=k, bias=np.zeros(1, dtype=complex))
    >>> out = complex_conv(x, layer)
    >>> bool(np.abs(out[0] - naive).max() <= 1e-12)
    True

    # Error case: channel mismatch
    >>> complex_conv(np.zeros((2, 3, 3)), layer)
    Traceback (most recent call last):
        ...
    ValueError: Convolution expects 1 input channels, got 2

    """
    kernels = layer["kernels"]
    if x.shape[-3] != kernels.shape[1]:
        raise ValueError(
            f"Convolution expects {kernels.shape[1]} input channels, got {x.shape[-3]}"
        )
    windows = _windows(np.asarray(x, dtype=complex))
    win_r, win_i = windows.real, windows.imag
    k_r, k_i = kernels.real, kernels.imag

    def correlate(k: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.einsum("oiuv,...ihwuv->...ohw", k, w)

    real = correlate(k_r, win_r) - correlate(k_i, win_i)
    imag = correlate(k_r, win_i) + correlate(k_i, win_r)
    return real + 1j * imag + layer["bias"][:, None, None]


def clrelu(x: ComplexTensor, slope: float = LEAKY_SLOPE) -> ComplexTensor:
    """Leaky ReLU applied separately to the real and imaginary parts.

    >>> clrelu(np.array([1 + 2j, -1 + 2j, -1 - 1j]), 0.01).tolist()
    [(1+2j), (-0.01+2j), (-0.01-0.01j)]

    """
    real = np.where(x.real > 0, x.real, slope * x.real)
    imag = np.where(x.imag > 0, x.imag, slope * x.imag)
    return real + 1j * imag


def _clrelu_backward(pre: ComplexTensor, g: ComplexTensor, slope: float) -> ComplexTensor:
    real = np.where(pre.real > 0, 1.0, slope) * g.real
    imag = np.where(pre.imag > 0, 1.0, slope) * g.imag
    return real + 1j * imag


def _conv_backward(
    x: ComplexTensor, layer: ComplexConvLayer, g: ComplexTensor
) -> tuple[ComplexConvLayer, ComplexTensor]:
    """Gradients of a convolution w.r.t. its weights and its input."""
    x_batch = x.reshape(-1, *x.shape[-3:])
    g_batch = g.reshape(-1, *g.shape[-3:])
    grad_kernels = np.einsum("bohw,bihwuv->oiuv", g_batch, _windows(x_batch).conj())
    grad_bias = g_batch.sum(axis=(0, 2, 3))
    flipped = layer["kernels"][:, :, ::-1, ::-1].conj()
    grad_x = np.einsum("oist,...oabst->...iab", flipped, _windows(g))
    return ComplexConvLayer(kernels=grad_kernels, bias=grad_bias), grad_x


# %% Model construction
def _conv_layer(
    out_ch: int, in_ch: int, rng: np.random.Generator | None
) -> ComplexConvLayer:
    shape = (out_ch, in_ch, KERNEL_SIZE, KERNEL_SIZE)
    if rng is None:
        kernels = np.zeros(shape, dtype=complex)
    else:
        fan_in = in_ch * KERNEL_SIZE * KERNEL_SIZE
        std = np.sqrt(2.0 / (fan_in * 4))
        kernels = std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ComplexConvLayer(kernels=kernels, bias=np.zeros(out_ch, dtype=complex))


def _delta_layer() -> ComplexConvLayer:
    layer = _conv_layer(1, 1, None)
    layer["kernels"][0, 0, PAD, PAD] = 1.0
    return layer


def init_model(
    hidden_channels: tuple[int, int] = HIDDEN_CHANNELS,
    rng: np.random.Generator | None = None,
    slope: float = LEAKY_SLOPE,
    identity_shortcuts: bool = False,
) -> EnhancerModel:
    """Build an enhancer with random weights, or all-zero weights without ``rng``.

    With ``identity_shortcuts`` the shortcuts start as centred deltas and the last
    convolution of each block starts at zero, so the untrained model is the
    identity map.

    >>> model = init_model((4, 4), np.random.default_rng(0))
    >>> [layer["kernels"].shape for layer in model["block1"]]
    [(4, 1, 3, 3), (4, 4, 3, 3), (1, 4, 3, 3)]
    >>> model["shortcut2"]["kernels"].shape
    (1, 1, 3, 3)
    >>> init_model((0, 4))
    Traceback (most recent call last):
        ...
    ValueError: Hidden channel counts must be positive, got (0, 4)

    """
    c1, c2 = (int(c) for c in hidden_channels)
    if c1 < 1 or c2 < 1:
        raise ValueError(f"Hidden channel counts must be positive, got {(c1, c2)}")
    if not 0 < slope < 1:
        raise ValueError(f"Leaky slope must lie in (0, 1), got {slope}")

    def block(channels: int) -> list[ComplexConvLayer]:
        return [
            _conv_layer(channels, 1, rng),
            _conv_layer(channels, channels, rng),
            _conv_layer(1, channels, rng),
        ]

    model = EnhancerModel(
        block1=block(c1),
        shortcut1=_conv_layer(1, 1, rng),
        block2=block(c2),
        shortcut2=_conv_layer(1, 1, rng),
        hidden_channels=(c1, c2),
        slope=slope,
    )
    if identity_shortcuts:
        model["shortcut1"] = _delta_layer()
        model["shortcut2"] = _delta_layer()
        model["block1"][-1] = _conv_layer(1, c1, None)
        model["block2"][-1] = _conv_layer(1, c2, None)
    return model


def model_layers(model: EnhancerModel) -> list[ComplexConvLayer]:
    """Layers in storage order: block1, shortcut1, block2, shortcut2."""
    return [*model["block1"], model["shortcut1"], *model["block2"], model["shortcut2"]]


def parameters(model: EnhancerModel) -> list[np.ndarray]:
    """Every weight array in storage order, kernels before bias within a layer."""
    return [
        array
        for layer in model_layers(model)
        for array in (layer["kernels"], layer["bias"])
    ]


def parameter_count(model: EnhancerModel) -> int:
    """Number of real parameters (real and imaginary parts counted separately).

    >>> parameter_count(init_model((4, 4)))
    940

    """
    return 2 * sum(array.size for array in parameters(model))


# %% Forward and backward
def _as_batch(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim not in (CSI_NDIM, BATCH_NDIM):
        raise ValueError(
            f"Enhancer expects P × N_c or S × P × N_c input, got shape {h.shape}"
        )
    return h[..., None, :, :]


def _block_forward(
    layers: list[ComplexConvLayer], x: ComplexTensor, slope: float
) -> tuple[ComplexTensor, list[tuple[ComplexTensor, ComplexTensor]]]:
    cache = []
    out = x
    for index, layer in enumerate(layers):
        pre = complex_conv(out, layer)
        cache.append((out, pre))
        out = clrelu(pre, slope) if index < len(layers) - 1 else pre
    return out, cache


def _block_backward(
    layers: list[ComplexConvLayer],
    cache: list[tuple[ComplexTensor, ComplexTensor]],
    g: ComplexTensor,
    slope: float,
) -> tuple[list[ComplexConvLayer], ComplexTensor]:
    grads: list[ComplexConvLayer] = []
    for index in reversed(range(len(layers))):
        layer_input, pre = cache[index]
        if index < len(layers) - 1:
            g = _clrelu_backward(pre, g, slope)
        grad, g = _conv_backward(layer_input, layers[index], g)
        grads.insert(0, grad)
    return grads, g


def _forward_with_cache(
    model: EnhancerModel, h_norm: np.ndarray
) -> tuple[np.ndarray, dict]:
    x = _as_batch(h_norm)
    slope = model["slope"]
    main1, cache1 = _block_forward(model["block1"], x, slope)
    features = main1 + complex_conv(x, model["shortcut1"])
    spectrum = isac_transform(features)
    main2, cache2 = _block_forward(model["block2"], spectrum, slope)
    out = isac_inverse(main2 + complex_conv(spectrum, model["shortcut2"]))
    cache = {"x": x, "block1": cache1, "spectrum": spectrum, "block2": cache2}
    return out[..., 0, :, :], cache


def forward(model: EnhancerModel, h_norm: np.ndarray) -> np.ndarray:
    """Enhance normalised CSI, one P × N_c matrix or a stack S × P × N_c.

    >>> h = np.random.default_rng(0).normal(size=(8, 16)) + 0j
    >>> bool(forward(init_model((2, 2)), h).any())
    False
    >>> identity = init_model((2, 2), np.random.default_rng(1), identity_shortcuts=True)
    >>> bool(np.abs(forward(identity, h) - h).max() <= 1e-10)
    True
    >>> forward(identity, np.zeros(8))
    Traceback (most recent call last):
        ...
    ValueError: Enhancer expects P × N_c or S × P × N_c input, got shape (8,)

    # Zero biases leave the network positively homogeneous and piecewise linear
    >>> rng = np.random.default_rng(2)
    >>> model = init_model((2, 2), rng)
    >>> x = rng.normal(size=(8, 16)) + 1j * rng.normal(size=(8, 16))
    >>> bool(np.allclose(forward(model, 3.0 * x), 3.0 * forward(model, x)))
    True
    >>> d = rng.normal(size=(8, 16)) + 1j * rng.normal(size=(8, 16))
    >>> base = forward(model, x)
    >>> one, two = (forward(model, x + t * 1e-9 * d) - base for t in (1, 2))
    >>> bool(np.abs(two - 2 * one).max() <= 1e-6 * np.abs(two).max())
    True

    """
    out, _ = _forward_with_cache(model, h_norm)
    return out


def enhance(model: EnhancerModel, h_ls: np.ndarray) -> np.ndarray:
    """Normalise raw CSI, run the enhancer and restore the original scale.

    >>> from isac.channel import make_static_scene, true_csi
    >>> from isac.config import default_system_config
    >>> cfg = default_system_config(num_subcarriers=16)
    >>> h = true_csi(make_static_scene(cfg), cfg)
    >>> identity = init_model((2, 2), np.random.default_rng(1), identity_shortcuts=True)
    >>> bool(np.abs(enhance(identity, h) - h).max() <= 1e-10 * np.abs(h).max())
    True

    """
    h_norm, report = normalize(h_ls)
    return forward(model, h_norm) * np.sqrt(report["signal_power_est"])


def loss(h_true_norm: np.ndarray, h_out: np.ndarray) -> float:
    """Squared Frobenius norm of the output error, summed over a stack.

    >>> loss(np.ones((2, 3)), np.ones((2, 3)))
    0.0
    >>> loss(np.zeros((8, 16)), np.ones((8, 16)))
    128.0
    >>> loss(np.zeros((2, 3)), np.zeros((3, 2)))
    Traceback (most recent call last):
        ...
    ValueError: Loss needs equal shapes, got (2, 3) and (3, 2)

    """
    if np.shape(h_true_norm) != np.shape(h_out):
        raise ValueError(
            f"Loss needs equal shapes, got {np.shape(h_true_norm)} and {np.shape(h_out)}"
        )
    return float(np.sum(np.abs(np.asarray(h_out) - np.asarray(h_true_norm)) ** 2))


def nmse(h_true_norm: np.ndarray, h_out: np.ndarray) -> float:
    """Energy-weighted NMSE, loss divided by the target energy.

    >>> nmse(np.full((2, 2), 2.0), np.full((2, 2), 1.0))
    0.25

    """
    return loss(h_true_norm, h_out) / float(np.sum(np.abs(h_true_norm) ** 2))


def nmse_db(h_true_norm: np.ndarray, h_out: np.ndarray) -> float:
    """NMSE in dB, clamped at the reporting floor.

    >>> nmse_db(np.ones((2, 2)), np.ones((2, 2)))
    -120.0
    >>> round(nmse_db(np.full((2, 2), 2.0), np.full((2, 2), 1.0)), 4)
    -6.0206

    """
    ratio = nmse(h_true_norm, h_out)
    if ratio <= 10 ** (NMSE_FLOOR_DB / 10):
        return NMSE_FLOOR_DB
    return float(10 * np.log10(ratio))


def backward(
    model: EnhancerModel, h_norm: np.ndarray, h_true_norm: np.ndarray
) -> tuple[EnhancerModel, float]:
    """Analytic gradient of the summed loss for every weight.

    The transforms inside the network are linear, so their adjoints carry the
    gradient: (T⁻¹)^H before block 2 and T^H before block 1.

    Args:
        model: Enhancer to differentiate
        h_norm: Normalised input, P × N_c or S × P × N_c
        h_true_norm: Matching normalised target

    Returns:
        Tuple of (gradient shaped like the model, loss value)

    >>> rng = np.random.default_rng(0)
    >>> model = init_model((2, 2), rng)
    >>> h = rng.normal(size=(4, 8)) + 1j * rng.normal(size=(4, 8))
    >>> grad, value = backward(model, h, forward(model, h))
    >>> value, max(float(np.abs(g).max()) for g in parameters(grad))
    (0.0, 0.0)

    # Shortcuts only: each centre tap sees the residual correlated with the input
    >>> plain = init_model((2, 2), identity_shortcuts=True)
    >>> y = rng.normal(size=(4, 8)) + 1j * rng.normal(size=(4, 8))
    >>> grad, value = backward(plain, h, y)
    >>> bool(np.isclose(value, np.sum(np.abs(h - y) ** 2)))
    True
    >>> expected = 2 * np.sum((h - y) * h.conj())
    >>> taps = [grad[name]["kernels"][0, 0, 1, 1] for name in ("shortcut1", "shortcut2")]
    >>> bool(np.allclose(taps, expected))
    True

    """
    out, cache = _forward_with_cache(model, h_norm)
    residual = out - np.asarray(h_true_norm, dtype=complex)
    slope = model["slope"]

    g_out = (2.0 * residual)[..., None, :, :]
    g_spectrum_sum = inverse_adjoint(g_out)
    grads2, g_spectrum = _block_backward(
        model["block2"], cache["block2"], g_spectrum_sum, slope
    )
    grad_sc2, g_spectrum_sc = _conv_backward(
        cache["spectrum"], model["shortcut2"], g_spectrum_sum
    )
    g_features = transform_adjoint(g_spectrum + g_spectrum_sc)
    grads1, _ = _block_backward(model["block1"], cache["block1"], g_features, slope)
    grad_sc1, _ = _conv_backward(cache["x"], model["shortcut1"], g_features)

    gradient = EnhancerModel(
        block1=grads1,
        shortcut1=grad_sc1,
        block2=grads2,
        shortcut2=grad_sc2,
        hidden_channels=model["hidden_channels"],
        slope=slope,
    )
    return gradient, float(np.sum(np.abs(residual) ** 2))


# %% Training
def adam_init(model: EnhancerModel) -> AdamState:
    """Zero moment estimates matching the model's real parameter views."""
    views = [array.view(np.float64) for array in parameters(model)]
    return AdamState(
        step=0,
        first=[np.zeros_like(v) for v in views],
        second=[np.zeros_like(v) for v in views],
    )


def adam_step(
    model: EnhancerModel, gradient: EnhancerModel, state: AdamState, learning_rate: float
) -> None:
    """Update the model in place with one Adam step on the real parameter views."""
    beta1, beta2 = ADAM_BETAS
    state["step"] += 1
    step = state["step"]
    for param, grad, first, second in zip(
        parameters(model),
        parameters(gradient),
        state["first"],
        state["second"],
        strict=True,
    ):
        g = np.ascontiguousarray(grad).view(np.float64)
        first *= beta1
        first += (1 - beta1) * g
        second *= beta2
        second += (1 - beta2) * g**2
        m_hat = first / (1 - beta1**step)
        v_hat = second / (1 - beta2**step)
        update = learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)
        param.view(np.float64)[...] -= update


def _model_nmse_db(
    model: EnhancerModel, inputs: np.ndarray, targets: np.ndarray
) -> float:
    return nmse_db(targets, forward(model, inputs))


def train(
    model: EnhancerModel,
    dataset: TrainingSet,
    hyperparams: TrainSection,
    rng: np.random.Generator,
) -> tuple[EnhancerModel, list[TrainRecord]]:
    """Fit the enhancer with mini-batch Adam on the mean per-sample loss.

    The input model is left untouched; a trained copy is returned with one
    TrainRecord per epoch. Batches are shuffled with ``rng``.

    Args:
        model: Starting weights
        dataset: Normalised training and evaluation pairs
        hyperparams: Epochs, batch size and learning rate
        rng: Random stream used for shuffling

    Returns:
        Tuple of (trained model, per-epoch records)

    Raises:
        ValueError: If the training or evaluation set is empty

    >>> rng = np.random.default_rng(0)
    >>> x = rng.normal(size=(4, 4, 8)) + 1j * rng.normal(size=(4, 4, 8))
    >>> data = TrainingSet(train_inputs=x, train_targets=0.5 * x,
    ...                    eval_inputs=x, eval_targets=0.5 * x)
    >>> start = init_model((2, 2), np.random.default_rng(1))
    >>> params = {"epochs": 2, "batch_size": 2, "learning_rate": 0.0}
    >>> trained, records = train(start, data, params, np.random.default_rng(2))
    >>> all(np.array_equal(a, b) for a, b in zip(parameters(start), parameters(trained)))
    True
    >>> [record["epoch"] for record in records]
    [1, 2]
    >>> empty = TrainingSet(train_inputs=x[:0], train_targets=x[:0],
    ...                     eval_inputs=x, eval_targets=x)
    >>> train(start, empty, params, rng)
    Traceback (most recent call last):
        ...
    ValueError: Training needs non-empty train and eval sets, got 0 and 4 samples

    """
    n_train = len(dataset["train_inputs"])
    n_eval = len(dataset["eval_inputs"])
    if n_train == 0 or n_eval == 0:
        raise ValueError(
            "Training needs non-empty train and eval sets, "
            f"got {n_train} and {n_eval} samples"
        )
    model = copy.deepcopy(model)
    state = adam_init(model)
    batch_size = max(1, int(hyperparams["batch_size"]))
    records: list[TrainRecord] = []

    for epoch in range(1, int(hyperparams["epochs"]) + 1):
        order = rng.permutation(n_train)
        for start in range(0, n_train, batch_size):
            batch = order[start : start + batch_size]
            gradient, _ = backward(
                model, dataset["train_inputs"][batch], dataset["train_targets"][batch]
            )
            for array in parameters(gradient):
                array /= len(batch)
            adam_step(model, gradient, state, hyperparams["learning_rate"])

        record = TrainRecord(
            epoch=epoch,
            train_nmse_db=_model_nmse_db(
                model, dataset["train_inputs"], dataset["train_targets"]
            ),
            eval_nmse_db=_model_nmse_db(
                model, dataset["eval_inputs"], dataset["eval_targets"]
            ),
        )
        records.append(record)
        logger.info(
            f"Epoch {epoch:3d}: train NMSE {record['train_nmse_db']:.2f} dB, "
            f"eval NMSE {record['eval_nmse_db']:.2f} dB"
        )
    return model, records

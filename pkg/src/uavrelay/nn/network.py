"""Sequential network over an image plus an auxiliary vector."""

import copy
import json

import numpy as np

from .layers import ConcatAux, Conv2D, Dense, Flatten, LeakyReLU, Layer, Tanh, layer_from_dict

CHECKPOINT_MAGIC = b"UAVRELAY-NET"
CHECKPOINT_VERSION = 1


class Network:
    """Layers applied in order; exactly one ``ConcatAux`` joins the aux vector.

    ``forward`` caches activations; ``backward`` consumes that cache, fills
    every layer's ``grads`` and returns ``(d_image, d_aux)``.
    """

    def __init__(self, layers, input_shape, seed=0):
        self.layers = [layer_from_dict(l) if isinstance(l, dict) else l for l in layers]
        self.input_shape = tuple(int(s) for s in input_shape)
        rng = np.random.default_rng(seed)

        concat = [i for i, l in enumerate(self.layers) if isinstance(l, ConcatAux)]
        if len(concat) != 1:
            raise ValueError(f"network needs exactly one ConcatAux layer, found {len(concat)}")
        if not any(isinstance(l, Flatten) for l in self.layers[: concat[0]]):
            raise ValueError(f"layer {concat[0]} (ConcatAux) must come after a Flatten layer")

        shape = self.input_shape
        self.shapes = [shape]
        for i, layer in enumerate(self.layers):
            if not isinstance(layer, Layer):
                raise ValueError(f"layer {i} is not a Layer: {layer!r}")
            try:
                shape = layer.build(shape, rng)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({type(layer).__name__}): {exc}") from None
            self.shapes.append(shape)
        self.aux_len = self.layers[concat[0]].aux_len
        self.output_shape = shape
        self._cached = False

    @property
    def params(self):
        return [p for l in self.layers for p in l.params]

    @property
    def grads(self):
        return [g for l in self.layers for g in l.grads]

    def spec(self):
        return [l.to_dict() for l in self.layers]

    def n_params(self):
        return sum(p.size for p in self.params)

    def get_weights(self):
        return [p.copy() for p in self.params]

    def set_weights(self, weights):
        params = self.params
        if len(weights) != len(params):
            raise ValueError(f"expected {len(params)} parameter arrays, got {len(weights)}")
        for i, (p, w) in enumerate(zip(params, weights)):
            if p.shape != np.shape(w):
                raise ValueError(f"parameter {i}: shape {np.shape(w)} != expected {p.shape}")
            p[...] = w

    def clone(self):
        other = copy.deepcopy(self)
        other._cached = False
        return other

    def forward(self, image, aux):
        image = np.asarray(image, dtype=np.float64)
        aux = np.asarray(aux, dtype=np.float64)
        if image.ndim == len(self.input_shape):
            image = image[None]
        if aux.ndim == 1:
            aux = aux[None]
        if image.shape[1:] != self.input_shape:
            raise ValueError(f"layer 0: image shape {image.shape[1:]} != expected {self.input_shape}")
        if aux.shape != (image.shape[0], self.aux_len):
            raise ValueError(
                f"aux shape {aux.shape} != expected ({image.shape[0]}, {self.aux_len})"
            )
        x = image
        for layer in self.layers:
            x = layer.forward(x, aux) if isinstance(layer, ConcatAux) else layer.forward(x)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite network output")
        self._cached = True
        return x

    def backward(self, grad_out, input_grad=True):
        """Backpropagate ``grad_out``; ``input_grad=False`` skips the image gradient."""
        if not self._cached:
            raise RuntimeError("backward called without a matching forward pass")
        self._cached = False
        d = np.asarray(grad_out, dtype=np.float64)
        d_aux = None
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if isinstance(layer, ConcatAux):
                d, d_aux = layer.backward(d)
            elif i == 0 and not input_grad and isinstance(layer, Conv2D):
                d = layer.backward(d, need_input_grad=False)
            else:
                d = layer.backward(d)
        return d, d_aux

    # -- checkpoints -------------------------------------------------------

    def save(self, path):
        header = {
            "layers": self.spec(),
            "input_shape": list(self.input_shape),
            "param_shapes": [list(p.shape) for p in self.params],
        }
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC + f" {CHECKPOINT_VERSION}\n".encode())
            fh.write(json.dumps(header).encode() + b"\n")
            for p in self.params:
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, expected_spec=None):
        """Rebuild a network from a checkpoint, validating against ``expected_spec`` if given."""
        with open(path, "rb") as fh:
            magic = fh.readline().split()
            if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
                raise ValueError("not a network checkpoint")
            if int(magic[1]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {magic[1].decode()}")
            header = json.loads(fh.readline())
            if expected_spec is not None and [dict(l) for l in expected_spec] != header["layers"]:
                raise ValueError("checkpoint layers do not match the expected network spec")
            net = cls(header["layers"], header["input_shape"])
            params = net.params
            if [list(p.shape) for p in params] != header["param_shapes"]:
                raise ValueError("checkpoint parameter shapes do not match the layer spec")
            for p in params:
                buf = fh.read(p.size * 8)
                if len(buf) != p.size * 8:
                    raise ValueError("truncated checkpoint")
                p[...] = np.frombuffer(buf, dtype="<f8").reshape(p.shape)
            if fh.read(1):
                raise ValueError("trailing bytes in checkpoint")
        return net


def min_input_size(conv_specs):
    """Smallest square side that a chain of ``(kernel, stride)`` convs accepts."""
    side = 1
    while True:
        s = side
        ok = True
        for kernel, stride in conv_specs:
            if s < kernel:
                ok = False
                break
            s = (s - kernel) // stride + 1
        if ok:
            return side
        side += 1


def conv_stack(in_ch, channels, kernels, strides, slope):
    layers = []
    for out_ch, k, s in zip(channels, kernels, strides):
        layers += [Conv2D(in_ch, out_ch, k, s), LeakyReLU(slope)]
        in_ch = out_ch
    return layers


def build_spec(aux_len, out_units, *, channels=(32, 64, 64), kernels=(4, 2, 1), strides=(2, 1, 1),
               dense=(512, 256), linear=(256,), slope=0.01, squash=False, in_ch=1):
    """Layer list for the conv, concat, dense actor and critic family.

    The default widths give the convolution stack 32/64/64 (kernels 4/2/1,
    strides 2/1/1), activated dense layers 512/256, one linear 256 layer and
    the output head. ``squash`` adds a tanh for bounded actor outputs.
    """
    layers = conv_stack(in_ch, channels, kernels, strides, slope)
    layers += [Flatten(), ConcatAux(aux_len)]
    for units in dense:
        layers += [Dense(units), LeakyReLU(slope)]
    layers += [Dense(u) for u in linear]
    layers.append(Dense(out_units))
    if squash:
        layers.append(Tanh())
    return layers

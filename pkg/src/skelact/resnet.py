"""CIFAR-style residual networks (depth 6n+2) for 32x32 three-channel inputs."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn import checkpoint
from .nn import functional as F
from .nn.layers import BatchNorm2d, Conv2d, Linear

VALID_DEPTHS = (20, 32, 44, 56, 110)
INPUT_SIZE = 32


@dataclass(frozen=True)
class ResNetConfig:
    depth: int = 20
    num_classes: int = 8
    stage_widths: tuple = (16, 32, 64)
    seed: int = 0

    def __post_init__(self):
        if self.depth not in VALID_DEPTHS:
            raise ValueError(
                f"depth must be one of {sorted(VALID_DEPTHS)}, got {self.depth}"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        object.__setattr__(self, "stage_widths", tuple(self.stage_widths))
        if len(self.stage_widths) != 3:
            raise ValueError("stage_widths must have three entries")

    @property
    def blocks_per_stage(self):
        return (self.depth - 2) // 6


def downsample_shortcut(x):
    """Parameter-free shortcut: take even spatial indices, zero-pad C -> 2C."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ValueError(f"downsample shortcut needs even spatial dims, got {x.shape}")
    out = np.zeros((B, 2 * C, H // 2, W // 2), dtype=x.dtype)
    out[:, :C] = x[:, :, ::2, ::2]
    return out


def downsample_shortcut_backward(dout, in_shape):
    C = in_shape[1]
    dx = np.zeros(in_shape, dtype=dout.dtype)
    dx[:, :, ::2, ::2] = dout[:, :C]
    return dx


class ResidualBlock:
    """conv-BN-ReLU-conv-BN, plus shortcut, then ReLU."""

    def __init__(self, name, c_in, c_out, stride, rng, dtype):
        if stride == 2:
            if c_out != 2 * c_in:
                raise ValueError("downsampling block must double the channel count")
        elif c_in != c_out:
            raise ValueError("identity block must preserve the channel count")
        self.name = name
        self.stride = stride
        self.conv1 = Conv2d(f"{name}.conv1", c_in, c_out, stride, rng, dtype)
        self.bn1 = BatchNorm2d(f"{name}.bn1", c_out, dtype)
        self.conv2 = Conv2d(f"{name}.conv2", c_out, c_out, 1, rng, dtype)
        self.bn2 = BatchNorm2d(f"{name}.bn2", c_out, dtype)
        self._cache = None

    @property
    def shortcut(self):
        return "DownsampleZeroPad" if self.stride == 2 else "Identity"

    def layers(self):
        return [self.conv1, self.bn1, self.conv2, self.bn2]

    def parameters(self):
        return [p for layer in self.layers() for p in layer.parameters()]

    def forward(self, x, training=False):
        h = self.bn1.forward(self.conv1.forward(x, training), training)
        h, mask1 = F.relu_forward(h)
        h = self.bn2.forward(self.conv2.forward(h, training), training)
        skip = downsample_shortcut(x) if self.stride == 2 else x
        out, mask2 = F.relu_forward(h + skip)
        self._cache = (x.shape, mask1, mask2)
        return out

    def backward(self, dout):
        in_shape, mask1, mask2 = self._cache
        d = F.relu_backward(dout, mask2)
        dskip = downsample_shortcut_backward(d, in_shape) if self.stride == 2 else d
        dh = self.conv2.backward(self.bn2.backward(d))
        dh = F.relu_backward(dh, mask1)
        dx = self.conv1.backward(self.bn1.backward(dh))
        self._cache = None
        return dx + dskip


class ResNetModel:
    """Stem, three stages of residual blocks, global average pool, linear head."""

    def __init__(self, config, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.seed)
        w1, w2, w3 = config.stage_widths
        n = config.blocks_per_stage

        self.stem_conv = Conv2d("stem.conv", 3, w1, 1, rng, self.dtype)
        self.stem_bn = BatchNorm2d("stem.bn", w1, self.dtype)
        self.stages = []
        c_in = w1
        for s, width in enumerate((w1, w2, w3)):
            blocks = []
            for b in range(n):
                stride = 2 if (b == 0 and s > 0) else 1
                blocks.append(ResidualBlock(f"stage{s + 1}.{b}", c_in, width, stride, rng, self.dtype))
                c_in = width
            self.stages.append(blocks)
        self.fc = Linear("fc", w3, config.num_classes, rng, self.dtype)
        self.extra = {}
        self._cache = None

    # -- structure -------------------------------------------------------

    def blocks(self):
        return [b for stage in self.stages for b in stage]

    def parameters(self):
        params = self.stem_conv.parameters() + self.stem_bn.parameters()
        for block in self.blocks():
            params += block.parameters()
        return params + self.fc.parameters()

    def batch_norms(self):
        bns = [self.stem_bn]
        for block in self.blocks():
            bns += [block.bn1, block.bn2]
        return bns

    def weighted_layer_count(self):
        return 1 + 2 * len(self.blocks()) + 1

    # -- computation -----------------------------------------------------

    def forward(self, x, training=False, return_stages=False):
        """Logits for a (B, 3, H, W) batch.

        H and W must be divisible by 4; the network is built for 32x32 and
        :meth:`predict_logits` enforces that, but smaller inputs are accepted
        here so gradient checks can run on toy spatial sizes.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected input of shape (B, 3, H, W), got {x.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"spatial dims must be divisible by 4, got {x.shape}")
        h = self.stem_bn.forward(self.stem_conv.forward(x, training), training)
        h, stem_mask = F.relu_forward(h)
        stage_outputs = []
        for stage in self.stages:
            for block in stage:
                h = block.forward(h, training)
            stage_outputs.append(h)
        pooled, pool_shape = F.global_avg_pool_forward(h)
        logits = self.fc.forward(pooled, training)
        self._cache = (stem_mask, pool_shape)
        if return_stages:
            return logits, stage_outputs
        return logits

    def backward(self, dlogits):
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        stem_mask, pool_shape = self._cache
        d = F.global_avg_pool_backward(self.fc.backward(dlogits), pool_shape)
        for block in reversed(self.blocks()):
            d = block.backward(d)
        d = F.relu_backward(d, stem_mask)
        d = self.stem_conv.backward(self.stem_bn.backward(d))
        self._cache = None
        return d

    def predict_logits(self, x, batch_size=256):
        """Eval-mode logits for a (B, 3, 32, 32) batch."""
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1:] != (3, INPUT_SIZE, INPUT_SIZE):
            raise ValueError(
                f"expected input of shape (B, 3, {INPUT_SIZE}, {INPUT_SIZE}), got {x.shape}"
            )
        chunks = [
            self.forward(x[i:i + batch_size], training=False)
            for i in range(0, len(x), batch_size)
        ]
        self._cache = None
        if not chunks:
            return np.zeros((0, self.config.num_classes), dtype=self.dtype)
        return np.concatenate(chunks)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- persistence -----------------------------------------------------

    def state_tensors(self):
        """Ordered (name, array) pairs: parameters, then batch-norm running stats."""
        tensors = [(p.name, p.value) for p in self.parameters()]
        for bn in self.batch_norms():
            prefix = bn.state.gamma.name.rsplit(".", 1)[0]
            tensors.append((f"{prefix}.running_mean", bn.state.running_mean))
            tensors.append((f"{prefix}.running_var", bn.state.running_var))
        return tensors

    def descriptor(self):
        cfg = asdict(self.config)
        cfg["stage_widths"] = list(self.config.stage_widths)
        return {"architecture": cfg, "dtype": self.dtype.name}

    def save(self, path, extra=None):
        desc = self.descriptor()
        if extra:
            desc["extra"] = extra
        checkpoint.save(path, self.state_tensors(), desc)

    def to_bytes(self, extra=None):
        desc = self.descriptor()
        if extra:
            desc["extra"] = extra
        return checkpoint.dumps(self.state_tensors(), desc)

    def load_state(self, tensors):
        targets = {}
        for p in self.parameters():
            targets[p.name] = ("param", p)
        for bn in self.batch_norms():
            prefix = bn.state.gamma.name.rsplit(".", 1)[0]
            targets[f"{prefix}.running_mean"] = ("mean", bn.state)
            targets[f"{prefix}.running_var"] = ("var", bn.state)
        names = [name for name, _ in tensors]
        if sorted(names) != sorted(targets):
            missing = set(targets) - set(names)
            unexpected = set(names) - set(targets)
            raise checkpoint.CheckpointError(
                f"checkpoint tensors do not match model (missing {sorted(missing)[:3]}, "
                f"unexpected {sorted(unexpected)[:3]})"
            )
        for name, arr in tensors:
            kind, obj = targets[name]
            if kind == "param":
                if arr.shape != obj.value.shape:
                    raise checkpoint.CheckpointError(f"shape mismatch for {name}")
                obj.value[...] = arr.astype(self.dtype)
            elif kind == "mean":
                obj.running_mean = arr.copy()
            else:
                obj.running_var = arr.copy()

    @classmethod
    def load(cls, path, expected=None):
        """Rebuild a model from a checkpoint; ``expected`` (a ResNetConfig) must match if given."""
        desc, tensors = checkpoint.load(path)
        arch = desc.get("architecture")
        if arch is None:
            raise checkpoint.CheckpointError("checkpoint has no architecture descriptor")
        config = ResNetConfig(
            depth=arch["depth"],
            num_classes=arch["num_classes"],
            stage_widths=tuple(arch["stage_widths"]),
            seed=arch.get("seed", 0),
        )
        if expected is not None and (
            expected.depth, expected.num_classes, tuple(expected.stage_widths)
        ) != (config.depth, config.num_classes, config.stage_widths):
            raise checkpoint.CheckpointError(
                f"checkpoint architecture {arch} does not match expected {expected}"
            )
        model = cls(config, dtype=desc.get("dtype", "float64"))
        model.load_state(tensors)
        model.extra = desc.get("extra", {})
        return model


def build(config, dtype=np.float64):
    """Construct a freshly initialized model for ``config``."""
    if not isinstance(config, ResNetConfig):
        config = ResNetConfig(**config)
    return ResNetModel(config, dtype=dtype)


def param_count(model):
    return int(sum(p.value.size for p in model.parameters()))

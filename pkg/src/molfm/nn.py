"""Neural-network layers, AdamW, and learning-rate schedules on the autodiff kernel."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, dtype=np.float32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = shape if shape is not None else (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Base class: child modules and parameters are discovered by attribute scan."""

    def __init__(self):
        self.training = True

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and not value.requires_grad and name.startswith("running_"):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_buffers(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def state_dict(self):
        out = {}
        for name, p in self.named_parameters():
            out[name] = p.data
        for name, b in self.named_buffers():
            out[name] = b.data
        return out

    def load_state_dict(self, state: dict):
        own = {}
        for name, p in self.named_parameters():
            own[name] = p
        for name, b in self.named_buffers():
            own[name] = b
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state mismatch: missing={missing} extra={extra}")
        for name, t in own.items():
            arr = np.asarray(state[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()

    def _children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield item

    def train(self, mode=True):
        self.training = mode
        for child in self._children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, dtype=np.float32, bias=True):
        super().__init__()
        self.W = Tensor(xavier_uniform(rng, in_dim, out_dim, dtype=dtype), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.W
        if self.b is not None:
            out = out + self.b
        return out


class Embedding(Module):
    def __init__(self, num_embeddings, dim, rng, dtype=np.float32):
        super().__init__()
        self.W = Tensor(rng.normal(0.0, 0.02, size=(num_embeddings, dim)).astype(dtype), requires_grad=True)

    def __call__(self, ids) -> Tensor:
        from .autodiff import gather_rows

        ids = np.asarray(ids)
        flat = gather_rows(self.W, ids.reshape(-1))
        return flat.reshape(ids.shape + (self.W.shape[1],))


class LayerNorm(Module):
    def __init__(self, dim, rng=None, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        norm = xc / (var + self.eps).sqrt()
        return norm * self.gain + self.bias


class BatchNorm1d(Module):
    """Per-feature standardization over the batch axis with running statistics."""

    def __init__(self, dim, rng=None, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.running_mean = Tensor(np.zeros(dim, dtype=dtype))
        self.running_var = Tensor(np.ones(dim, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        if self.training:
            mu = x.mean(axis=0, keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=0, keepdims=True)
            m = self.momentum
            self.running_mean.data = (1 - m) * self.running_mean.data + m * mu.data.reshape(-1)
            self.running_var.data = (1 - m) * self.running_var.data + m * var.data.reshape(-1)
            norm = xc / (var + self.eps).sqrt()
        else:
            norm = (x - self.running_mean) / Tensor(np.sqrt(self.running_var.data + self.eps))
        return norm * self.gamma + self.beta


class Dropout(Module):
    """Inverted dropout; `mc` forces train-mode behavior at inference."""

    def __init__(self, p):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1): {p}")
        self.p = p
        self.mc = False

    def __call__(self, x: Tensor, rng: np.random.Generator) -> Tensor:
        if self.p == 0.0 or (not self.training and not self.mc):
            return x
        keep = (rng.random(x.shape) >= self.p).astype(x.data.dtype)
        return x * Tensor(keep / (1.0 - self.p))


def mlp_2layer(in_dim, hidden, out_dim, rng, dtype=np.float32):
    return MLP2(in_dim, hidden, out_dim, rng, dtype)


class MLP2(Module):
    """Two linear layers with a ReLU between."""

    def __init__(self, in_dim, hidden, out_dim, rng, dtype=np.float32):
        super().__init__()
        self.fc1 = Linear(in_dim, hidden, rng, dtype)
        self.fc2 = Linear(hidden, out_dim, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())


class AdamW:
    """AdamW with decoupled weight decay and bias-corrected moments."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** t)
            v_hat = self.v[i] / (1 - b2 ** t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                p.data = p.data - self.lr * self.weight_decay * p.data

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class WarmupCosine:
    """Linear warmup 0 -> base over `warmup_steps`, then cosine decay to 0 at `total_steps`."""

    def __init__(self, base_lr, warmup_steps, total_steps):
        self.base_lr = base_lr
        self.warmup_steps = warmup_steps
        self.total_steps = total_steps

    def lr_at(self, step: int) -> float:
        if step < 0:
            raise ValueError("step must be >= 0")
        if self.warmup_steps > 0 and step < self.warmup_steps:
            return self.base_lr * step / self.warmup_steps
        span = max(self.total_steps - self.warmup_steps, 1)
        frac = min((step - self.warmup_steps) / span, 1.0)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


class CosineWarmRestarts:
    """Cosine cycles of length T0 * T_mult^i epochs, restarting at base lr."""

    def __init__(self, base_lr, t0_epochs=10, t_mult=2):
        self.base_lr = base_lr
        self.t0 = t0_epochs
        self.t_mult = t_mult

    def lr_at(self, epoch: float) -> float:
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        t, length = epoch, self.t0
        while t >= length:
            t -= length
            length *= self.t_mult
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * t / length))

"""Parameters, modules and the two parametric layers every network here is built from."""

from typing import Iterator

import numpy as np

from src.common.errors import ShapeError
from src.core.tensor import ops
from src.core.tensor.tensor import Tensor, get_default_dtype


class Parameter(Tensor):
    """A trainable tensor with a dotted name such as ``app.stage4.conv.w``."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class Module:
    """
    Container that registers parameters and sub-modules by name.

    Names compose along the registration path, so two modules never share a parameter name
    unless registered under the same path.
    """

    def __init__(self):
        self._parameters: dict[str, Parameter] = {}
        self._modules: dict[str, "Module"] = {}

    def add_parameter(self, name: str, data: np.ndarray) -> Parameter:
        if name in self._parameters or name in self._modules:
            raise ValueError(f"duplicate member name '{name}'")
        param = Parameter(np.asarray(data, dtype=get_default_dtype()), name=name)
        self._parameters[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        if name in self._parameters or name in self._modules:
            raise ValueError(f"duplicate member name '{name}'")
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [param for _, param in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        """Store each parameter's full dotted path on the parameter itself."""
        for name, param in self.named_parameters(prefix):
            param.name = name

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        """
        Copy arrays into parameters by name.

        Raises:
            ShapeError: Missing/unexpected names (strict) or extent mismatch
        """
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise ShapeError(f"state mismatch: missing={missing} unexpected={unexpected}")
        for name, value in state.items():
            if name not in own:
                continue
            param = own[name]
            if tuple(value.shape) != param.shape:
                raise ShapeError(f"{name}: checkpoint shape {value.shape} != model {param.shape}")
            param.data = np.array(value, dtype=param.data.dtype)

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class Conv2d(Module):
    """Square-kernel convolution with He-normal weights and zero bias."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.stride, self.padding = stride, padding
        self.w = self.add_parameter(
            "w",
            rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, kernel_size, kernel_size)),
        )
        self.b = self.add_parameter("b", np.zeros(out_channels))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class Linear(Module):
    """Fully connected layer ``x @ w.T + b`` with He-normal weights and zero bias."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.w = self.add_parameter(
            "w", rng.normal(0.0, np.sqrt(2.0 / in_features), (out_features, in_features))
        )
        self.b = self.add_parameter("b", np.zeros(out_features))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.fully_connected(x, self.w, self.b)

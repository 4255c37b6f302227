"""ReLU MLP feature extractor shared by every uncertainty head."""

import numpy as np

from ..diffcore import Parameter, Tape, Tensor


class FeatureExtractor:
    """Fully connected stack d -> hidden... with ReLU after every layer."""

    def __init__(self, input_dim: int, hidden, gen):
        if input_dim < 1 or not hidden:
            raise ValueError("extractor needs input_dim >= 1 and a hidden stack")
        widths = [input_dim, *hidden]
        self.widths = tuple(widths)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(widths, widths[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(Parameter(scale * gen.standard_normal((fan_in, fan_out))))
            self.biases.append(Parameter(np.zeros(fan_out)))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def forward(self, tape: Tape, x: Tensor) -> Tensor:
        h = x
        for w, b in zip(self.weights, self.biases):
            h = tape.relu(tape.add(tape.matmul(h, w.value), b.value))
        return h

    def parameters(self):
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

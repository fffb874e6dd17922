from typing import Callable, Sequence

import numpy as np

from .autodiff import Node, ParamVector, Tape


def gradient_check(loss_fn: Callable[[Tape], Node], params: Sequence[ParamVector],
                   step: float = 1e-5, floor: float = 1e-4) -> float:
    """Compares taped gradients against central finite differences.

    ``loss_fn`` builds the loss on the tape it is given and must be
    deterministic. Returns the largest relative error
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
    """
    for pv in params:
        pv.zero_grad()
    tape = Tape(trainable=params)
    tape.backward(loss_fn(tape))
    analytic = [pv.grads.copy() for pv in params]
    for pv in params:
        pv.zero_grad()

    def evaluate() -> float:
        return loss_fn(Tape(trainable=())).item()

    worst = 0.0
    for pv, expected in zip(params, analytic):
        for k in range(pv.values.size):
            original = pv.values[k]
            pv.values[k] = original + step
            upper = evaluate()
            pv.values[k] = original - step
            lower = evaluate()
            pv.values[k] = original
            numeric = (upper - lower) / (2.0 * step)
            scale = max(abs(expected[k]), abs(numeric), floor)
            worst = max(worst, abs(expected[k] - numeric) / scale)
    return float(worst)

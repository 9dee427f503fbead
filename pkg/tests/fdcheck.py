"""Central finite-difference gradient checking used across the test suite."""

import numpy as np
import torch


def finite_difference_grad(f, x: torch.Tensor, h: float = 1e-5) -> torch.Tensor:
    """Central differences of a scalar-valued f with respect to every element of x."""
    assert x.dtype == torch.float64, "finite differences need double precision"
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = float(f(x))
        flat[i] = orig - h
        down = float(f(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: torch.Tensor, numeric: torch.Tensor,
                       zero_floor: float = 1e-4, zero_atol: float = 1e-7) -> float:
    """Max relative error over elements with meaningful magnitude.

    Elements where both gradients are below zero_floor are compared absolutely
    (central differences lose all relative precision near zero).
    """
    a = analytic.detach().reshape(-1)
    n = numeric.detach().reshape(-1)
    scale = torch.maximum(a.abs(), n.abs())
    big = scale > zero_floor
    rel = 0.0
    if big.any():
        rel = ((a[big] - n[big]).abs() / scale[big]).max().item()
    small = ~big
    if small.any():
        absdiff = (a[small] - n[small]).abs().max().item()
        assert absdiff < zero_atol, f"near-zero gradient mismatch: {absdiff}"
    return rel


def check_input_gradient(f, x: torch.Tensor, rtol: float = 1e-4, h: float = 1e-5) -> float:
    """Assert analytic d f / d x matches central differences; returns the max rel error."""
    x = x.detach().clone().requires_grad_(True)
    out = f(x)
    out.backward()
    analytic = x.grad.detach().clone()
    numeric = finite_difference_grad(lambda t: f(t).detach(), x.detach().clone(), h=h)
    rel = max_relative_error(analytic, numeric)
    assert rel < rtol, f"gradient mismatch: max relative error {rel:.3e} >= {rtol}"
    return rel


def random_binary_mask(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.uniform(size=shape) < 0.5).astype(np.uint8)

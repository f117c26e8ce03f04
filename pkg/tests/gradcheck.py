"""Central finite-difference gradient check shared by the test modules."""
import torch


def fd_check(fn, x, h=1e-4, rtol=1e-2, atol=1e-6, max_kinks=0.05):
    """Compare autograd with central differences at every coordinate of ``x``.

    Coordinates whose stencil straddles a kink (ReLU, |.|) are detected by
    disagreeing one-sided differences and skipped; they must stay rare.
    """
    x = x.detach().clone().double().requires_grad_(True)
    fn(x).backward()
    flat = x.detach().clone().flatten()
    kinks = 0
    with torch.no_grad():
        f0 = float(fn(x.detach()))
        for i in range(flat.numel()):
            plus, minus = flat.clone(), flat.clone()
            plus[i] += h
            minus[i] -= h
            fp, fm = float(fn(plus.view_as(x))), float(fn(minus.view_as(x)))
            fwd, bwd = (fp - f0) / h, (f0 - fm) / h
            if abs(fwd - bwd) > rtol * max(abs(fwd), abs(bwd)) + atol:
                kinks += 1
                continue
            fd = (fp - fm) / (2 * h)
            g = float(x.grad.flatten()[i])
            assert abs(g - fd) <= rtol * max(abs(g), abs(fd)) + atol, (i, g, fd)
    assert kinks <= max_kinks * flat.numel(), f"{kinks} of {flat.numel()} coordinates non-smooth"

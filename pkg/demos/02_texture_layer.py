"""How the texture latent is quantised and what it costs.

A standard-normal latent (what a trained encoder's posterior mean roughly
looks like) is quantised at several QP values.  The coded size and the
worst-case reconstruction error are printed for each.

    python demos/02_texture_layer.py
"""
import numpy as np

from concodec.texcodec import (
    QuantizedTexture, dequantize, entropy_decode, entropy_encode, parse_texture_header, q_step, quantize,
)


def main():
    z = np.random.default_rng(0).normal(size=64)
    print(" qp   step        bits  max |z - z_hat|")
    for qp in (4, 16, 28, 40, 51):
        qt = quantize(z, qp)
        data = entropy_encode(qt)
        assert entropy_decode(data) == qt
        _, _, nbits = parse_texture_header(data)
        err = np.abs(z - dequantize(qt)).max()
        print(f" {qp:2d}  {q_step(qp):.6f}  {nbits:5d}  {err:.6f}")

    print("\nEvery +6 in QP doubles the step, which costs about one bit less per coordinate.")
    worst = QuantizedTexture(np.array([32767, -32768] * 32), 51)
    _, _, nbits = parse_texture_header(entropy_encode(worst))
    print(f"Pathological latent (all int16 extremes): {nbits} bits, within the raw-mode ceiling of 1 + 64*16 = 1025.")


if __name__ == "__main__":
    main()

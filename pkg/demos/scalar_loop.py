"""Unstable scalar plant under an encrypted first-order controller.

Runs the nominal, quantized and encrypted loops, then sweeps a few seeds to
show how far the encrypted state drifts from the quantized one.
"""

import math
import sys

from lwecontrol.controller import LinearController, Scales, encrypt_controller, quantize
from lwecontrol.lwe import Params, keygen
from lwecontrol.sim import Plant, disturbance_report, emit_csv, run_encrypted, run_nominal, run_quantized, session_rngs

plant = Plant([[math.sqrt(2)]], [[1]], [[1]], [-3.4])
ctrl = LinearController([[-1]], [1], ["-1.414"], [0], x0=["4.3"])
qc = quantize(ctrl, Scales("1e-3", 1, "1e-3", "1e-6"))
print("integer controller: F =", qc.F.tolist(), "G =", qc.G_bar.tolist(), "H =", qc.H_bar.tolist())

nom = run_nominal(plant, ctrl, 150)
qz = run_quantized(plant, qc, 150, 10**9)
print(f"nominal   |x_p[150]| = {abs(nom.xp_final[0]):.3g}")
print(f"quantized |x_p[150]| = {abs(qz.xp_final[0]):.3g}")

for seed in range(5):
    params = Params(p=10**9, L=100, r=10, N=4, seed=seed)
    sk = keygen(params)
    ec = encrypt_controller(qc, sk, params, session_rngs(seed)[0])
    tr = run_encrypted(plant, ec, qc, sk, params, 150)
    gap = max(abs(a - b) for a, b in zip(tr.u, nom.u))
    rep = disturbance_report(tr, params, qc)
    print(
        f"seed {seed}: max|L(xi - xbar)| = {tr.max_err_L():4d}  |x_p[150]| = {abs(tr.xp_final[0]):.4f}"
        f"  max|u - u_nom| = {gap:.4f}  max Delta1 = {float(max(rep.delta1)):.2f} (bound {float(rep.bound_delta1):.2f})"
    )

if len(sys.argv) > 1:
    emit_csv(tr, sys.argv[1])
    print("wrote", sys.argv[1])

"""PID and FIR controllers always have an integer state matrix.

Shows the realizations, checks the PID frequency response, and runs a
stabilizing PID loop encrypted.
"""

import numpy as np

from lwecontrol.controller import LinearController, NonIntegerF, Scales, encrypt_controller, quantize, realize_fir, realize_pid
from lwecontrol.lwe import Params, keygen
from lwecontrol.sim import Plant, run_encrypted, run_nominal, session_rngs

fir = realize_fir(["0.5", "0.25", "0.125"])
print("FIR F =", [[int(v) for v in row] for row in fir.F], " H =", [str(v) for v in fir.H.flat], " J =", fir.J[0, 0])

kp, ki, kd, Ts, Nd = -1, -2, -0.1, 0.1, 1
pid = realize_pid(kp, ki, kd, Ts, Nd)
print("PID F =", [[int(v) for v in row] for row in pid.F], " H =", [str(v) for v in pid.H.flat], " J =", pid.J[0, 0])
for w in (0.1, 1.0, 3.0):
    z = np.exp(1j * w)
    direct = kp + ki * Ts / (z - 1) + kd / (Ts / Nd + Ts / (z - 1))
    print(f"  w={w}: realization {pid.transfer_function(z):.6f}  formula {direct:.6f}")

try:
    quantize(LinearController([[0.9]], [1], [1], [0]), Scales(1, 1, 1, 1))
except NonIntegerF:
    print("F = 0.9 is refused:", NonIntegerF.explanation.split(".")[0] + ".")

plant = Plant([[0.9]], [[0.1]], [[1]], [1.0])
scales = Scales("1e-3", "1e-3", "1e-3", "1e-6")
qc = quantize(pid, scales)
params = Params(p=10**12, L=10**3, r=10, N=4, seed=0)
sk = keygen(params)
ec = encrypt_controller(qc, sk, params, session_rngs(params.seed)[0])
tr = run_encrypted(plant, ec, qc, sk, params, 150)
nom = run_nominal(plant, pid, 150)
print(f"encrypted PID: |x_p[150]| = {abs(tr.xp_final[0]):.2e}, nominal {abs(nom.xp_final[0]):.2e}")

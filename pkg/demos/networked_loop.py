"""The controller in a separate process, talking to the plant over TCP.

The child process only ever sees public parameters and ciphertexts; the
plant side keeps the key.  The trace is compared with an in-process run.
"""

import math
import multiprocessing
import time

from lwecontrol.controller import LinearController, Scales, encrypt_controller, quantize
from lwecontrol.lwe import Params, keygen
from lwecontrol.netloop import bind_listener, run_plant_side, serve_listener
from lwecontrol.sim import Plant, run_encrypted, session_rngs

plant = Plant([[math.sqrt(2)]], [[1]], [[1]], [-3.4])
qc = quantize(LinearController([[-1]], [1], ["-1.414"], [0], x0=["4.3"]), Scales("1e-3", 1, "1e-3", "1e-6"))
params = Params(p=10**9, L=100, r=10, N=4, seed=3)
sk = keygen(params)

if __name__ == "__main__":
    listener = bind_listener("127.0.0.1:0")
    host, port = listener.getsockname()
    proc = multiprocessing.get_context("fork").Process(target=serve_listener, args=(listener,))
    proc.start()
    listener.close()

    t0 = time.perf_counter()
    net = run_plant_side(f"{host}:{port}", plant, qc, sk, params, 150)
    proc.join()
    print(f"networked run: {len(net)} steps in {time.perf_counter() - t0:.2f} s, complete = {net.complete}")

    ec = encrypt_controller(qc, sk, params, session_rngs(params.seed)[0])
    local = run_encrypted(plant, ec, qc, sk, params, 150)
    print("identical to in-process run:", net.u == local.u and net.err_L == local.err_L)

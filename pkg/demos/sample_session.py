"""Interactive-style walk through the cryptosystem: encrypt, add, multiply."""

import numpy as np

from lwecontrol.gsw import decompose, encrypt_gsw, encrypt_gsw_matrix, mat_mul_ct, mul
from lwecontrol.lwe import Params, add, decrypt, encrypt, keygen, noise_actual

params = Params(p=10**4, L=10**4, r=10, N=4)
rng = np.random.default_rng(0)
sk = keygen(params)
print(f"q = L*p = {params.q}, key length N = {params.N}")

c = encrypt(30, sk, params, rng)
print("Enc(30) =", c.body.tolist())
print("Dec     =", decrypt(c, sk, params)[0], " error inside:", noise_actual(c, 30, sk, params)[0])

s = add(encrypt(-2, sk, params, rng), encrypt(3, sk, params, rng))
print("Dec(Enc(-2) + Enc(3)) =", decrypt(s, sk, params)[0])

m = mul(encrypt_gsw(3, sk, params, rng), encrypt(-2, sk, params, rng), params)
print("Dec(D(Enc(-2)) . Enc2(3)) =", decrypt(m, sk, params)[0], " error:", noise_actual(m, -6, sk, params)[0])

F = encrypt_gsw_matrix([[1, 2], [3, 4]], sk, params, rng)
x = encrypt([1, 2], sk, params, rng)
print("Dec(F x) =", decrypt(mat_mul_ct(F, x, params), sk, params).tolist())

print("digits of [40, 35, -27] mod 100:", decompose([40, 35, -27], 100).tolist())

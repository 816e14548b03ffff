"""Honest key distribution with a reused Bell pair.

Alice and Bob share one Bell pair for the whole session. Each round both
rotate their half by theta, Alice hides a key bit in a fresh carrier with a
CNOT, and Bob undoes it with his own CNOT. The pair survives every round,
and the carrier on the wire looks maximally mixed.
"""
import math

import numpy as np

from qkdlab import qstate
from qkdlab.adversary import CARRIER, Strategy, new_eve
from qkdlab.protocol import ProtocolConfig, execute_steps, initial_state, random_key, round_steps, run_session

theta = math.pi / 4
key = random_key(24, seed=1)
res = run_session(ProtocolConfig(theta=theta, rounds=len(key), seed=1), key)

print("sent     ", "".join(map(str, key)))
print("received ", "".join(str(t.received) for t in res.transcripts))
print("QBER     ", res.qber)

# what a wiretapper sees: the carrier between Alice's and Bob's CNOTs
for bit in (0, 1):
    eve = new_eve(Strategy.NONE)
    eve.begin_round()
    _, snaps, _ = execute_steps(initial_state(Strategy.NONE), round_steps(theta, eve, bit),
                                np.random.default_rng(0))
    in_flight = [st for tag, st in snaps if tag == "stage"][1]
    rho = qstate.reduced_density(in_flight, [CARRIER])
    print(f"carrier density for bit {bit}:\n{np.round(rho.real, 12)}")

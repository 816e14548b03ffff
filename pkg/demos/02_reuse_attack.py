"""The reuse attack that stays invisible at theta = pi/4.

Eve entangles an ancilla with the pair in round 1 (S2), then runs a four
round cycle: rotate her ancilla along with Alice and Bob, and every other
round pull out the XOR of the current key bit with the first one. No error
ever reaches Bob, and once a check bit lands on a recorded round she can
resolve the first bit and read about half of the key.
"""
import math

from qkdlab.adversary import Strategy, infer_key
from qkdlab.protocol import ProtocolConfig, random_key, run_session

key = random_key(21, seed=3)
cfg = ProtocolConfig(theta=math.pi / 4, rounds=len(key), seed=3, check_fraction=0.25,
                     strategy=Strategy.S2)
res = run_session(cfg, key)

print("key         ", "".join(map(str, key)))
print("QBER        ", res.qber)
print("records     ", res.eve_records)
print("checked     ", res.detection.check_indices, "mismatches:", res.detection.mismatches)

inf = infer_key(res.eve_records, res.detection.leaked_bits, key)
show = lambda bits: "".join("." if b is None else str(b) for b in bits)
print("hypothesis 0", show(inf.candidates[0]))
print("hypothesis 1", show(inf.candidates[1]))
print("resolved    ", show(inf.resolved) if inf.resolved else "no")
print(f"accuracy     {inf.accuracy:.3f}")

# the simpler attack (S1) never rotates the ancilla and is caught at once
s1 = run_session(ProtocolConfig(theta=math.pi / 4, rounds=len(key), seed=3, strategy=Strategy.S1), key)
print("S1 QBER     ", round(s1.qber, 3))

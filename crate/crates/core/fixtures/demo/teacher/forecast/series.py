import math

OT = [round(20.0 + 4.0 * math.sin(2 * math.pi * h / 24) + 0.05 * h, 3) for h in range(72)]
HISTORY = OT[:48]
HELD_OUT = OT[48:]

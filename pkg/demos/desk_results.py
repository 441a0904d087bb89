"""Summarise the desk-scale runs under results/desk.

Reads the learning curves of the A/D/E analogs and the comparison table written by
``endonav compare``, and prints the two trends that matter: force
feedback (E vs D) and contact-rich training (E vs A).

    python3 demos/desk_results.py [results/desk]
"""
import sys
from pathlib import Path

from endonav import evalsuite as ev
from endonav.ppo import read_curve

root = Path(sys.argv[1] if len(sys.argv) > 1 else "results/desk")

for pid in ("A", "D", "E"):
    f = root / pid / "learning_curve.csv"
    if not f.exists():
        print(f"{pid}: not trained yet")
        continue
    rows = read_curve(f)
    last = rows[-1]
    best = max(r["sr"] for r in rows)
    print(f"{pid}: {int(last['timestep'])} steps, final training SR {last['sr']:.2f}, best {best:.2f}")

table_csv = root / "compare" / "table.csv"
if not table_csv.exists():
    sys.exit(f"\nno comparison table at {table_csv}; run endonav compare first")
table = ev.read_table(table_csv)
print()
print(table.to_markdown())


def sr(p, v):
    x = table.sr(p, v)
    return float("nan") if x is None else x


print(f"\nforce feedback in DE:   E {sr('E', 'DE'):.1f} vs D {sr('D', 'DE'):.1f}")
print(f"contact-rich training:  E {sr('E', 'DE'):.1f} vs A {sr('A', 'DE'):.1f}")
print(f"unseen forces/targets:  E keeps {sr('E', 'UE1'):.1f} on UE1, {sr('E', 'UE2'):.1f} on UE2")

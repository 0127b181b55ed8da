#!/usr/bin/env python3
"""Builds fixtures/july2016.csv: 61 hourly-ish DHT11 readings, 8-14 July 2016.

The raw field log is not available, so the series is synthesised and then
checked against the reference aggregates:
  * temperature mean rounds (half-up) to 15, humidity mean rounds to 82
  * temperature min 7, max 19
  * 9-13 July each have a rounded daily temperature mean of 14

Readings were logged in Glasgow local time (BST, UTC+1); they are written
out in UTC. Run from the repository root; output is deterministic.
"""
import csv
import math
import random
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path

POINTS = 61
STEP = timedelta(seconds=9900)  # 2 h 45 min
BST = timezone(timedelta(hours=1))
START_LOCAL = datetime(2016, 7, 8, 1, 0, tzinfo=BST)

DAY_TEMP = {8: 17.0, 9: 14.2, 10: 14.0, 11: 14.1, 12: 14.0, 13: 14.3, 14: 16.8}
DAY_RH = {8: 78.0, 9: 83.0, 10: 84.0, 11: 83.0, 12: 84.0, 13: 82.0, 14: 79.0}


def round_half_up(q: Fraction) -> int:
    return math.floor(q + Fraction(1, 2))


def synthesise(rng: random.Random):
    rows = []
    for i in range(POINTS):
        ts = (START_LOCAL + i * STEP).astimezone(timezone.utc)
        hour = ts.hour + ts.minute / 60.0
        diurnal = math.sin((hour - 9.0) / 24.0 * 2.0 * math.pi)
        t = DAY_TEMP[ts.day] + 1.6 * diurnal + rng.uniform(-0.7, 0.7)
        rh = DAY_RH[ts.day] - 4.0 * diurnal + rng.uniform(-1.5, 1.5)
        rows.append([ts, int(round(t)), int(round(rh))])
    # Record extremes: a warm afternoon on the 8th, a cold pre-dawn on the 14th.
    warm = max((r for r in rows if r[0].day == 8), key=lambda r: r[1])
    warm[1] = 19
    cold = min((r for r in rows if r[0].day == 14), key=lambda r: r[0].hour)
    cold[1] = 7
    return rows


def check(rows) -> bool:
    temps = [r[1] for r in rows]
    hums = [r[2] for r in rows]
    if len(rows) != POINTS:
        return False
    if not all(0 <= t <= 50 for t in temps) or not all(20 <= h <= 90 for h in hums):
        return False
    if min(temps) != 7 or max(temps) != 19:
        return False
    if round_half_up(Fraction(sum(temps), len(temps))) != 15:
        return False
    if round_half_up(Fraction(sum(hums), len(hums))) != 82:
        return False
    for day in range(9, 14):
        day_t = [r[1] for r in rows if r[0].day == day]
        if not day_t or round_half_up(Fraction(sum(day_t), len(day_t))) != 14:
            return False
    return True


def main():
    rng = random.Random(20160708)
    for attempt in range(100000):
        rows = synthesise(rng)
        if check(rows):
            break
    else:
        raise SystemExit("no dataset satisfied the constraints")
    out = Path(__file__).with_name("july2016.csv")
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["ts", "temp_c", "rh_pct"])
        for ts, t, rh in rows:
            w.writerow([ts.strftime("%Y-%m-%dT%H:%M:%SZ"), t, rh])
    temps = [r[1] for r in rows]
    hums = [r[2] for r in rows]
    print(f"attempt {attempt}: wrote {out} "
          f"temp mean {sum(temps)/len(temps):.3f} rh mean {sum(hums)/len(hums):.3f}")


if __name__ == "__main__":
    main()

"""Regenerate wisdm_sample_1000.txt (deterministic).

995 valid records over 994 physical lines (one line carries two records)
plus 6 defective lines, 1000 lines in total.
"""
from pathlib import Path

from lwhar.dataset import ActivityLabel as A
from lwhar.synthetic import wisdm_lines

BOUTS = [
    (1, A.WALKING, 250), (1, A.JOGGING, 200), (1, A.UPSTAIRS, 90), (1, A.DOWNSTAIRS, 80),
    (2, A.WALKING, 120), (2, A.SITTING, 70), (2, A.STANDING, 60),
    (3, A.JOGGING, 84), (3, A.UPSTAIRS, 41),
]
BAD = {
    100: "1,Walking,49105962326000,-0.6946377,12.680544,;",
    300: "1,Jogging,49106062271000,5.012288,11.264028;",
    420: "1,Upstairs,49106112167000,abc,10.882658,0.7627395;",
    500: "1,Downstairs,49106222305000,-1.1849703,12.108489,7.205164;".replace("Downstairs", "Lying"),
    650: "2,Sitting,49106332290000,nan,9.2,1.0;",
    800: "2,Standing,49106442306000,70.0,40.0,20.0;",
}


def main():
    lines = list(wisdm_lines(BOUTS, seed=11))
    lines[10] = lines[10] + lines.pop(11)  # two records on one physical line
    for pos in sorted(BAD):
        lines.insert(pos, BAD[pos])
    assert len(lines) == 1000
    Path(__file__).with_name("wisdm_sample_1000.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()

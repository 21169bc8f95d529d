"""
Configuration files and the glset CLI
=====================================

Jobs can be described in a small key/value config and run either through
``glset run <config>`` or programmatically.  Outputs are plot-ready CSV
plus JSON with full metadata, written deterministically: rerunning the same
config yields byte-identical bodies.
"""

import tempfile
from pathlib import Path

from glset import parse_config, run, serialize_config

CONFIG = """\
model kl_brownian
dim 16
formats csv json

functional gauss = exp(-norm2())

job density
  G bm_endpoint
  phi 1
  r_grid -2 -1 0 1 2
  n 200000
  seed 61
  estimator both

job surface
  G norm2
  phi gauss
  r 10
  n 200000
  seed 63
  k_list 1 2

job disintegrate
  G bm_endpoint
  phi_list 1 gauss
  bins 25
  n 200000
  seed 65
"""

config = parse_config(CONFIG)
print("parsed config with", len(config.jobs), "jobs; canonical form:\n")
print(serialize_config(config))

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "run1"
    code = run(config, output_dir=out)
    print("exit code:", code)
    print("\nartifacts:")
    for f in sorted(out.iterdir()):
        print(f"  {f.name:28s} {f.stat().st_size:6d} bytes")

    print("\nfirst lines of the density curve:")
    for line in (out / "job01_density.csv").read_text().splitlines()[:4]:
        print("  " + line)

    # determinism: run again and compare bytes
    out2 = Path(tmp) / "run2"
    run(config, output_dir=out2)
    same = all((out / f.name).read_bytes() == (out2 / f.name).read_bytes()
               for f in out.iterdir() if f.name != "manifest.json")
    print("\nrerun produced byte-identical bodies:", same)

print("\nthe same config works from the shell:")
print("  glset run my.cfg          # writes CSV/JSON artifacts + manifest")
print("  glset selftest            # acceptance battery, exit 2 on failure")
print("  glset grammar             # the functional expression grammar")

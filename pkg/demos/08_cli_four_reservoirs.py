"""The command-line runner on the four-reservoir layout.

Two thermal reservoirs at different temperatures, one squeezed and one
displaced bath all couple to one oscillator. The config in
configs/four_reservoirs.json asks for the heat generating function. The run
writes CSV results, a resolved config and a manifest. The `plots` subcommand
then turns them into plain column files.

Equivalent shell session:

    necl mgf --config demos/configs/four_reservoirs.json --out-dir necl-out/four
    necl plots --out-dir necl-out/four
"""

import json
import sys
from pathlib import Path

from necl import cli

here = Path(__file__).parent
out = Path(sys.argv[1] if len(sys.argv) > 1 else "necl-out/four")
code = cli.main(["mgf", "--config", str(here / "configs" / "four_reservoirs.json"), "--out-dir", str(out)])
print("exit code", code)
manifest = json.loads((out / "manifest.json").read_text())
print("config hash", manifest["config_hash"][:16], "outputs", manifest["outputs"])
print((out / "mgf.csv").read_text())
cli.main(["plots", "--out-dir", str(out)])

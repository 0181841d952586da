#!/usr/bin/env python3
"""Smoke test for the txlens_py extension module.

Builds the extension if needed, generates the sample corpus, and drives
the whole pipeline from Python: parse, decode-render, translate, extract
taint facts, infer invariants, and check the exploit transaction.

Usage: python3 python/smoke_test.py
"""

import json
import os
import shutil
import subprocess
import sys
import tempfile

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_or_build_extension() -> str:
    """Return a directory containing an importable txlens_py module."""
    candidates = [
        os.path.join(REPO_ROOT, "target", profile, "libtxlens_py.so")
        for profile in ("release", "debug")
    ]
    lib = next((c for c in candidates if os.path.exists(c)), None)
    if lib is None:
        print("building txlens-python (cargo build -p txlens-python --release)...")
        subprocess.run(
            ["cargo", "build", "-p", "txlens-python", "--release"],
            cwd=REPO_ROOT,
            check=True,
        )
        lib = candidates[0]
    stage = tempfile.mkdtemp(prefix="txlens_py_")
    shutil.copy(lib, os.path.join(stage, "txlens_py.so"))
    return stage


def check(label: str, ok: bool, detail: str = "") -> None:
    mark = "ok" if ok else "FAIL"
    print(f"  [{mark}] {label}" + (f": {detail}" if detail else ""))
    if not ok:
        sys.exit(1)


def main() -> None:
    sys.path.insert(0, locate_or_build_extension())
    import txlens_py

    print(f"txlens_py {txlens_py.__version__}")

    with tempfile.TemporaryDirectory(prefix="txlens_smoke_") as work:
        manifest = json.loads(txlens_py.write_sample_corpus(work))
        fixtures = manifest["fixtures"]
        config_dir = manifest["config_dir"]
        check("sample corpus", len(fixtures) == 10, f"{len(fixtures)} fixtures")

        # keccak sanity: the ERC20 transfer selector.
        digest = txlens_py.keccak("0x" + b"transfer(address,uint256)".hex())
        check("keccak", digest.startswith("0xa9059cbb"), digest[:10])

        # Invocation tree: vault frame with the token call beneath it.
        tree = json.loads(txlens_py.parse_fixture_tree(fixtures[0]))
        check(
            "parse tree",
            tree["call_kind"] == "root" and len(tree["children"]) == 1,
            f"root -> {len(tree['children'])} child",
        )
        rendered = txlens_py.render_fixture_tree(
            fixtures[0], decode=True, config_dir=config_dir
        )
        check(
            "decode render",
            "deposit(" in rendered and "balances[" in rendered,
            rendered.splitlines()[0],
        )

        # Fact translation preserves the instruction count.
        facts_text = txlens_py.translate_fixture(fixtures[0])
        fact_lines = [l for l in facts_text.splitlines() if not l.startswith("#")]
        entry_count = len(
            json.load(open(fixtures[0]))["trace"]["structLogs"]
        )
        check(
            "translate",
            len(fact_lines) == entry_count,
            f"{len(fact_lines)} fact lines",
        )

        # Taint: the deposit amount flows from calldata into storage.
        flows = txlens_py.extract_facts(
            fixtures[0], ["calldata:root:4:32"], "sstore:value"
        )
        check("extract", len(flows) >= 1, f"{len(flows)} sstore flows")

        # Invariant protocol over the corpus, then check the exploit.
        store = txlens_py.infer_invariants(
            manifest["vault"], fixtures, config_dir=config_dir
        )
        invariants = json.loads(store)
        check("infer", len(invariants) >= 15, f"{len(invariants)} invariants")

        report = json.loads(
            txlens_py.check_invariants(
                store, [manifest["exploit"]], config_dir=config_dir
            )
        )
        gas = next(
            i
            for i in report["per_invariant"]
            if i["template_id"] == "GasStartUpperBound"
        )
        check(
            "check exploit",
            any(v["witness"] == "150000" for v in gas["violations"]),
            "GasStartUpperBound flags witness 150000",
        )

        # A custom world driven from Python.
        world = txlens_py.World()
        world.deploy_program(
            "0x" + "0b" * 20, "PUSH1 7\nPUSH1 5\nSSTORE\nSTOP\n"
        )
        world.set_balance("0x" + "ee" * 20, "0xffffffff")
        fixture_json = world.execute(
            "0x" + "ee" * 20, "0x" + "0b" * 20, gas_limit=5000
        )
        entries = json.loads(fixture_json)["trace"]["structLogs"]
        check("world execute", len(entries) == 4, f"{len(entries)} entries")
        check(
            "world storage",
            world.storage("0x" + "0b" * 20, "0x5") == "0x7",
            "slot 5 = 7",
        )

        # Catalog shape.
        catalog = json.loads(txlens_py.catalog_json())
        categories = {t["category"] for t in catalog}
        check(
            "catalog",
            len(catalog) == 23 and len(categories) == 8,
            f"{len(catalog)} templates / {len(categories)} categories",
        )

    print("smoke test passed")


if __name__ == "__main__":
    main()

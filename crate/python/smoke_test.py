#!/usr/bin/env python3
"""Smoke test for the hidsense_py extension module.

Build the module first, then run this script:

    cargo build -p hidsense-py
    python3 python/smoke_test.py
"""

import pathlib
import shutil
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def import_extension():
    """Copy the built cdylib next to a suffix Python will import."""
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libhidsense_py.so", "hidsense_py.so", "libhidsense_py.dylib")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("hidsense_py is not built; run `cargo build -p hidsense-py` first")
    staging = pathlib.Path(tempfile.mkdtemp(prefix="hidsense-py-"))
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(built, staging / f"hidsense_py{suffix}")
    sys.path.insert(0, str(staging))
    import hidsense_py  # noqa: E402

    return hidsense_py


def main():
    hp = import_extension()

    # Timer and clock arithmetic.
    assert hp.timer0_interval_ns(256, 100, 48_000_000) == 832_000
    assert hp.derive_clocks(8_000_000, 2, 2, 1) == (48_000_000, 48_000_000)
    try:
        hp.derive_clocks(10_000_000, 3, 2, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("10 MHz / 3 is not a valid PLL input")

    # Conversion pipeline.
    conv = hp.pipeline(2.5)
    assert conv.code == 512 and conv.value == 250 and conv.text == "250 "
    for code_check in (hp.pipeline(0.0), hp.pipeline(5.0)):
        assert 0 <= code_check.value <= 499

    # Register decoding.
    adcon2 = hp.decode_register("ADCON2", 0xA6)
    assert adcon2["justification"] == "right"
    assert adcon2["acquisition"] == "8TAD"
    assert adcon2["clock"] == "Fosc/64"
    intcon = hp.decode_register("INTCON", 0xE0)
    assert intcon["gie"] == intcon["peie"] == intcon["tmr0ie"] == "enabled"

    # Descriptor binaries.
    assert len(hp.device_descriptor_bytes()) == 18
    assert len(hp.configuration_bytes()) == 41
    assert len(hp.report_descriptor_bytes()) == 47
    assert hp.device_descriptor_bytes()[8:12] == bytes([0x34, 0x12, 0x01, 0x00])

    # A full 13-second run.
    sim = hp.Simulation("constant:2.5", seed=1)
    sim.attach()
    sim.run_for(13.0)
    readings = sim.readings()
    assert len(readings) == 11, f"expected 11 readings, got {len(readings)}"
    assert all(r.text == "250 " and r.value == 250 for r in readings)
    assert readings[0].time_us == 2_008_000
    assert sim.status() == "USB Plugged....."
    assert not sim.watchdog_ever_tripped()
    info = sim.device_info()
    assert info[:2] == (0x1234, 0x0001)
    assert "reports: count=11" in sim.summary()
    assert "gap-mean=1000.0ms" in sim.summary()

    # Same seed, same trace; the trace text round-trips through the parser.
    sim2 = hp.Simulation("constant:2.5", seed=1)
    sim2.attach()
    sim2.run_for(13.0)
    assert sim.trace() == sim2.trace()
    assert "reports: count=11" in hp.summarize_trace(sim.trace())

    # A starved device: no keep-alive, no readings, watchdog trips.
    dead = hp.Simulation("constant:2.5", registers={"INTCON": 0x00})
    dead.attach()
    dead.run_for(13.0)
    assert dead.readings() == []
    assert dead.watchdog_ever_tripped()

    print("smoke test passed")


if __name__ == "__main__":
    main()

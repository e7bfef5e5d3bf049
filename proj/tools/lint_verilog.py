"""Strict Verilog-2005 lint of emitted files with pyslang; nonzero on any diagnostic."""
import sys

from pyslang.driver import Driver


def main(paths):
    d = Driver()
    d.addStandardArgs()
    args = "slang --std 1364-2005 -Weverything --error-limit 50 " + " ".join(paths)
    ok = d.parseCommandLine(args) and d.processOptions() and d.parseAllSources()
    comp = d.createCompilation()
    d.reportCompilation(comp, False)
    ok = d.reportDiagnostics(False) and ok
    # reportDiagnostics only fails on errors; warnings count too
    ok = ok and not any(True for _ in comp.getAllDiagnostics())
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

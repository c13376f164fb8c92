# fastrpe/cli/__main__.py
import sys

from fastrpe.cli.config import THREADS, pin_threads

# the benchmark times single-threaded; pin before numpy loads
pin_threads(THREADS or (1 if "bench" in sys.argv[1:] else None))

from fastrpe.cli.app import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())

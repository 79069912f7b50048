import logging
import os
import sys
import traceback

# Add src to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.cli import main as cli_main


# 全局异常钩子：打印所有未处理的异常
def global_excepthook(exc_type, exc_value, exc_tb):
    print(f"[GLOBAL EXCEPTION] {exc_type.__name__}: {exc_value}", file=sys.stderr)
    traceback.print_exception(exc_type, exc_value, exc_tb)


sys.excepthook = global_excepthook


def main():
    logging.basicConfig(level=logging.INFO, format="[%(levelname)s] %(message)s")
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()

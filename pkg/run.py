import faulthandler

faulthandler.enable()

from wnet_dsm.__main__ import main


if __name__ == '__main__':
    main()

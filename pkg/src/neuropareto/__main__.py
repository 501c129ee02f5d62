from neuropareto.cli import main

main()

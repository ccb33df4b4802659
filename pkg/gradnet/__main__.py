from gradnet.cli import main

main()

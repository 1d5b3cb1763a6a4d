from qkdswitch.cli import main

raise SystemExit(main())

from slidelab.cli import main

raise SystemExit(main())

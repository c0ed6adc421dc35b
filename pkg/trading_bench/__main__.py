from trading_bench.main import main

raise SystemExit(main())

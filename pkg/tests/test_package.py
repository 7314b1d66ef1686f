import types

import berknash


class TestPublicApi:
    def test_all_matches_exports(self):
        public = {n for n, v in vars(berknash).items() if not n.startswith("_") and not isinstance(v, types.ModuleType)}
        assert public == set(berknash.__all__)

    def test_entry_points_exported(self):
        for name in ("make_example", "discretize_smdp", "solve_berk_nash", "ladder_diagnose", "simulate_learning"):
            assert callable(getattr(berknash, name))

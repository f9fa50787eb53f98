"""Model, ensemble and ledger types package."""

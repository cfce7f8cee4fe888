"""CTC graph generator and analytics package."""

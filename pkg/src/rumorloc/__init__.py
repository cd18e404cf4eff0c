"""Rumor source localization with incomplete sensor observations."""

"""Pipeline and full-size verification tests."""

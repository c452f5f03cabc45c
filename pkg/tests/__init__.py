# Tests for ionshuttle

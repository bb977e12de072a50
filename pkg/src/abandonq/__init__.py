"""Heavy-traffic GI/GI/1+GI laboratory."""

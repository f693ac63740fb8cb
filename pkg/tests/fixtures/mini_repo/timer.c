/* Expiry timers for TREX routes. */

#include "trex.h"

static int clock_seconds = 0;

int trex_now(void)
{
    return clock_seconds;
}

void trex_tick(int seconds)
{
    clock_seconds += seconds;
}

void timer_touch(struct trex_route *route)
{
    route->expires_at = trex_now() + 60;
}

void timer_expire_sweep(void)
{
    int i;
    int n = route_table_size();

    for (i = 0; i < n; i++) {
        struct trex_route *route = route_nth(i);
        if (route == 0)
            continue;
        if (route->feasible && route->expires_at <= trex_now())
            route_lost(route->dest);
    }
}

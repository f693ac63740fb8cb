/* Neighbor liveness tracking. */

#include "trex.h"

#define TREX_NEIGHBOR_MAX 16
#define TREX_NEIGHBOR_HOLD 90

struct trex_neighbor {
    unsigned int addr;
    int last_heard;
    int alive;
};

static struct trex_neighbor neighbors[TREX_NEIGHBOR_MAX];
static int neighbor_used = 0;

struct trex_neighbor *neighbor_find(unsigned int addr)
{
    int i;

    for (i = 0; i < neighbor_used; i++) {
        if (neighbors[i].addr == addr)
            return &neighbors[i];
    }
    return 0;
}

int neighbor_heard(unsigned int addr)
{
    struct trex_neighbor *n = neighbor_find(addr);

    if (n == 0) {
        if (neighbor_used >= TREX_NEIGHBOR_MAX)
            return -1;
        n = &neighbors[neighbor_used++];
        n->addr = addr;
    }
    n->last_heard = trex_now();
    n->alive = 1;
    return 0;
}

void neighbor_sweep(void)
{
    int i;

    for (i = 0; i < neighbor_used; i++) {
        if (!neighbors[i].alive)
            continue;
        if (neighbors[i].last_heard + TREX_NEIGHBOR_HOLD <= trex_now())
            neighbors[i].alive = 0;
    }
}

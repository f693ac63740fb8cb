/* Deliberate name collisions, part one: static init/helper pair. */

static int init(int n)
{
    return n * 2;
}

static int helper(int x, int y)
{
    return x + y;
}

int walk(int depth)
{
    if (depth > 0)
        return walk(depth - 1);
    return init(depth);
}

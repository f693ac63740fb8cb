/* Variadic logging. */

int log_msg(int level, const char *fmt, ...)
{
    if (level < 0)
        return -1;
    return level;
}

void log_all(void)
{
    log_msg(1, "plain");
    log_msg(2, "with args %d %d", 40, 2);
}

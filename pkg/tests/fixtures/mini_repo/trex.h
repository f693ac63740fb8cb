/* Tiny Route Exchange protocol: shared definitions. */

#ifndef TREX_H
#define TREX_H

#define TREX_VERSION 1
#define TREX_INFINITY 16
#define TREX_MAX_HOPS 15
#define TREX_ROUTE_LIFETIME 180
#define TREX_TABLE_SIZE 64
#define TREX_MSG_UPDATE 1
#define TREX_MSG_REFRESH 2
#define TREX_MAX_ENTRIES 8

struct trex_entry {
    unsigned int dest;
    unsigned char hops;
    unsigned char reserved;
    unsigned short lifetime;
};

struct trex_msg {
    unsigned char version;
    unsigned char kind;
    unsigned char count;
    unsigned char reserved;
    struct trex_entry entries[TREX_MAX_ENTRIES];
};

struct trex_route {
    unsigned int dest;
    unsigned int next_hop;
    unsigned char hops;
    unsigned char feasible;
    unsigned char backup;
    int expires_at;
};

int parse_msg(const unsigned char *buf, int len, struct trex_msg *out);
int parse_entry(const unsigned char *buf, struct trex_entry *out);
int encode_msg(const struct trex_msg *msg, unsigned char *buf, int cap);

struct trex_route *route_find(unsigned int dest, int want_feasible);
int route_install(unsigned int dest, unsigned int next_hop, unsigned char hops);
void route_lost(unsigned int dest);
void route_withdraw(unsigned int dest);
int backup_exists(unsigned int dest);

void timer_touch(struct trex_route *route);
void timer_expire_sweep(void);
int trex_now(void);

void send_refresh_request(unsigned int dest);
void handle_refresh_request(unsigned int dest, unsigned int peer);

#endif

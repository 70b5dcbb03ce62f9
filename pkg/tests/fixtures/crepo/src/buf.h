#ifndef BUF_H
#define BUF_H

#include <stddef.h>

#define NAME_CAP 16
#define CLAMP(v, lo, hi) \
    ((v) < (lo) ? (lo)   \
                : (v) > (hi) ? (hi) : (v))

enum name_kind {
    NAME_KIND_DEVICE = 0,
    NAME_KIND_ALIAS = 1
};

struct name_slot {
    char text[NAME_CAP];
    enum name_kind kind;
};

union name_key {
    unsigned int id;
    char tag[4];
};

extern int g_count;

void copy_name(char *dst, size_t cap, const char *src);
size_t slot_used(const struct name_slot *slot);

#endif /* BUF_H */

#include "fileio.hpp"

#include <fcntl.h>
#include <unistd.h>

namespace io {

int File::open(const char *path)
{
    fd_ = ::open(path, O_RDONLY);
    return fd_;
}

void File::close()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

}  // namespace io

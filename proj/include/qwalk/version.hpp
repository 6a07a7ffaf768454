#pragma once

#define QWALK_VERSION "0.1.0"

#pragma once

#include <httpi/bench.hpp>
#include <httpi/client.hpp>
#include <httpi/config.hpp>
#include <httpi/crypto.hpp>
#include <httpi/encoding.hpp>
#include <httpi/service.hpp>
#include <httpi/session.hpp>
#include <httpi/soap.hpp>
#include <httpi/tokens.hpp>
#include <httpi/xml.hpp>

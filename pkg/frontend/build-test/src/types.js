"use strict";
// Wire types mirroring the query service's JSON bodies.
Object.defineProperty(exports, "__esModule", { value: true });

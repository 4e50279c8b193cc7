import { bootFromLocation } from "./app.js";

bootFromLocation(document, window);

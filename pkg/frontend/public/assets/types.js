// JSON shapes of the workflow service. The UI never invents fields: every
// type here mirrors a service response one-to-one.
export class ServiceError extends Error {
    status;
    code;
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
